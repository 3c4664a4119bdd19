"""``speechemo`` command line: corpus generation, feature caching, training and cross-validation.

Exit status: 0 success, 1 validation error, 2 runtime or data error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import containers
from .config import ConfigError, RunConfig, load_config, parse_overrides
from .corpus import Emotion, ManifestError, compute_stats, fold_for, load_manifest
from .dsp import ConfigError as DspConfigError
from .dsp import SpectrogramConfig, read_wav, stft_log_magnitude
from .gradcheck import check_gradients, miniature
from .metrics import FoldResult, Metrics, aggregate, round_pct
from .optim import GradNormLog
from .synth import synth_corpus, write_corpus
from .training import run_fold
from .vtlp import ALPHA_HIGH, ALPHA_LOW, WarpParams, warp_spectrogram

log = logging.getLogger("speechemo")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
RESULT_COLUMNS = ("fold", "session", "gender", "wa", "ua", "best_epoch")


class InvalidInput(Exception):
    """Bad arguments or configuration (exit 1)."""


class DataError(Exception):
    """Missing or corrupt data, or failure while running (exit 2)."""


# -- helpers ----------------------------------------------------------------------

def _config(args) -> RunConfig:
    try:
        return load_config(args.config, parse_overrides(getattr(args, "set", None)))
    except (ConfigError, ValueError) as exc:
        raise InvalidInput(str(exc)) from None


def _spectrogram(utt, spec_cfg: SpectrogramConfig):
    try:
        clip = read_wav(utt.source)
    except FileNotFoundError:
        raise DataError(f"utterance {utt.id}: audio file {utt.source} not found") from None
    except Exception as exc:
        raise DataError(f"utterance {utt.id}: unreadable audio {utt.source}: {exc}") from None
    try:
        return stft_log_magnitude(clip, spec_cfg)
    except ValueError as exc:
        raise DataError(f"utterance {utt.id}: {exc}") from None


def load_dataset(cfg: RunConfig, manifest_path=None):
    path = manifest_path or cfg.manifest
    if path is None:
        raise InvalidInput("no manifest: set [paths] manifest in the config")
    try:
        manifest = load_manifest(path)
    except OSError as exc:
        raise DataError(f"cannot read manifest: {exc}") from None
    except ManifestError as exc:
        raise DataError(str(exc)) from None
    specs = {}
    for u in manifest:
        cached = cfg.cache / "spec" / f"{u.id}.emsp" if cfg.cache else None
        if cached is not None and cached.exists():
            try:
                spec = containers.load_spectrogram(cached)
            except containers.ContainerError as exc:
                raise DataError(f"utterance {u.id}: bad cache file {cached}: {exc}") from None
            if spec.config != cfg.spectrogram:
                raise DataError(f"utterance {u.id}: cached spectrogram geometry differs from the config")
        else:
            spec = _spectrogram(u, cfg.spectrogram)
        specs[u.id] = spec
    return manifest, specs


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def write_results(path: Path, results):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in sorted(results, key=lambda r: r.fold_id):
            w.writerow([r.fold_id, r.session, r.gender, _fmt(100 * r.metrics.wa), _fmt(100 * r.metrics.ua),
                        r.best_epoch])


def read_results(path: Path) -> list[FoldResult]:
    """Per-fold rows (WA/UA in percent), e.g. a published fold table."""
    results = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                fold = int(row["fold"])
                wa, ua = float(row["wa"]) / 100, float(row["ua"]) / 100
                best = int(row.get("best_epoch") or 0)
                expected = fold_for(fold)
                if "session" in row and row["session"] and int(row["session"]) != expected.test[0]:
                    raise ValueError(f"fold {fold} is session {expected.test[0]}")
                if "gender" in row and row["gender"] and row["gender"].strip().upper() != expected.test[1]:
                    raise ValueError(f"fold {fold} tests gender {expected.test[1]}")
            except (KeyError, ValueError) as exc:
                raise InvalidInput(f"{path}: bad results row {row}: {exc}") from None
            results.append(FoldResult(fold, Metrics(wa, ua, np.zeros((4, 4), dtype=np.int64)), 0, best))
    if not results:
        raise InvalidInput(f"{path}: no result rows")
    return results


def write_confusion(path: Path, cm):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true\\pred", *(e.name.lower() for e in Emotion)])
        for e in Emotion:
            w.writerow([e.name.lower(), *(int(v) for v in cm[int(e)])])


def write_history(path: Path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "val_ua", "train_acc"])
        for h in history:
            w.writerow([h.epoch, f"{h.loss:.6f}", _fmt(h.val_ua), "" if h.train_acc is None else _fmt(h.train_acc)])


def print_table(results, agg, out=None):
    out = out or sys.stdout
    print(f"{'fold':>4} {'session':>7} {'gender':>6} {'WA (%)':>7} {'UA (%)':>7}", file=out)
    for fold, session, gender, wa, ua in agg.table:
        print(f"{fold:>4} {session:>7} {gender:>6} {round_pct(100 * wa):>7} {round_pct(100 * ua):>7}", file=out)
    r = agg.rounded()
    print(f"{'mean over ' + str(len(results)) + ' folds':>20} {r['mean_wa']:>7} {r['mean_ua']:>7}", file=out)
    print(f"{'best 5 by UA':>20} {r['best5_wa']:>7} {r['best5_ua']:>7}", file=out)


def write_aggregate(path: Path, results):
    agg = aggregate(results)
    doc = {
        "n_folds": len(results),
        "mean_wa": agg.rounded()["mean_wa"],
        "mean_ua": agg.rounded()["mean_ua"],
        "best5_wa": agg.rounded()["best5_wa"],
        "best5_ua": agg.rounded()["best5_ua"],
        "raw": {"mean_wa": agg.mean_wa, "mean_ua": agg.mean_ua,
                "best5_wa": agg.best5_wa, "best5_ua": agg.best5_ua},
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return agg


def train_fold(cfg: RunConfig, fold_id: int, out: Path, data=None) -> FoldResult:
    """Run one fold and write its checkpoint, metrics, history and gradient log under ``out``."""
    manifest, specs = data or load_dataset(cfg)
    fold = fold_for(fold_id)
    out.mkdir(parents=True, exist_ok=True)
    grad_log = GradNormLog(out / "grad_norms.csv")
    try:
        result = run_fold(fold, list(manifest), specs, cfg.network, cfg.train_options(), grad_log=grad_log)
    except (ValueError, FloatingPointError) as exc:
        raise DataError(f"fold {fold_id}: {exc}") from None
    containers.save_checkpoint(out / "checkpoint.emck", cfg.network, result.params)
    write_results(out / "metrics.csv", [result])
    write_confusion(out / "confusion.csv", result.metrics.confusion)
    write_history(out / "history.csv", result.history)
    return result


def _cv_worker(config_path, overrides, fold_id, out_dir):
    cfg = load_config(config_path, overrides)
    return train_fold(cfg, fold_id, Path(out_dir))


# -- subcommands -------------------------------------------------------------------

def cmd_gen_corpus(args):
    if args.per_class < 1:
        raise InvalidInput("--per-class must be >= 1")
    manifest, clips = synth_corpus(args.seed, args.per_class, imbalanced=args.imbalanced,
                                   sample_rate=args.sample_rate)
    try:
        write_corpus(args.out, manifest, clips)
    except OSError as exc:
        raise DataError(f"cannot write corpus to {args.out}: {exc}") from None
    counts = manifest.class_counts()
    total = sum(counts.values())
    width = max(counts.values())
    for e in Emotion:
        bar = "#" * max(1, round(40 * counts[e] / width)) if counts[e] else ""
        print(f"{e.name.lower():<10} {counts[e]:>5}  {bar}")
    print(f"{'total':<10} {total:>5}")


def cmd_prepare(args):
    cfg = _config(args)
    manifest, specs = load_dataset(cfg, args.manifest)
    out = Path(args.out)
    try:
        (out / "spec").mkdir(parents=True, exist_ok=True)
        (out / "stats").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(str(exc)) from None
    for u in manifest:
        containers.save_spectrogram(out / "spec" / f"{u.id}.emsp", specs[u.id])
    speakers = manifest.speakers()
    n_stats = 0
    for k in range(1, 11):
        fold = fold_for(k)
        train, val, test = fold.partition(manifest)
        if fold.test not in speakers or not train:
            continue
        # statistics of the float32 values a later cached run will see
        stats = compute_stats(specs[u.id].values.astype(np.float32) for u in train)
        doc = {"fold": k, "test": list(fold.test), "val": list(fold.val),
               "train_sessions": list(fold.train_sessions), "n_train": len(train),
               "mean": stats.mean, "std": stats.std, "epsilon": stats.epsilon}
        (out / "stats" / f"fold_{k:02d}.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        n_stats += 1
    print(f"cached {len(manifest)} spectrograms and {n_stats} fold statistics under {out}")


def cmd_train(args):
    cfg = _config(args)
    if not 1 <= args.fold <= 10:
        raise InvalidInput(f"--fold must be in 1..10, got {args.fold}")
    result = train_fold(cfg, args.fold, Path(args.out))
    print(f"fold {result.fold_id} (session {result.session}, {result.gender} test): "
          f"WA {round_pct(100 * result.metrics.wa)}%  UA {round_pct(100 * result.metrics.ua)}%  "
          f"best epoch {result.best_epoch}/{result.epochs_trained}")


def _parse_folds(text):
    if not text:
        return list(range(1, 11))
    try:
        folds = sorted({int(t) for t in text.split(",") if t.strip()})
    except ValueError:
        raise InvalidInput(f"--folds must be a comma-separated list of integers, got {text!r}") from None
    if not folds or any(not 1 <= k <= 10 for k in folds):
        raise InvalidInput(f"--folds entries must be in 1..10, got {text!r}")
    return folds


def cmd_cv(args):
    out = Path(args.out)
    if args.import_results:
        results = read_results(Path(args.import_results))
    else:
        cfg = _config(args)
        folds = _parse_folds(args.folds)
        if args.jobs < 1:
            raise InvalidInput("--jobs must be >= 1")
        overrides = parse_overrides(args.set)
        if args.jobs == 1:
            data = load_dataset(cfg)
            results = [train_fold(cfg, k, out / f"fold_{k:02d}", data) for k in folds]
        else:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                futures = [pool.submit(_cv_worker, args.config, overrides, k, str(out / f"fold_{k:02d}"))
                           for k in folds]
                results = [f.result() for f in futures]
        for r in results:
            write_confusion(out / f"confusion_fold_{r.fold_id:02d}.csv", r.metrics.confusion)
    out.mkdir(parents=True, exist_ok=True)
    write_results(out / "results.csv", results)
    agg = write_aggregate(out / "aggregate.json", results)
    print_table(results, agg)


def cmd_gradcheck(args):
    cfg = _config(args)
    mini = miniature(cfg.network)
    high = args.precision == "high"
    dtype = np.float64 if high else np.float32
    threshold = 1e-4 if high else 1e-3
    errors = check_gradients(mini, seed=args.seed, dtype=dtype)
    worst = max(errors.values())
    for name, err in errors.items():
        flag = "" if err <= threshold else "  FAIL"
        print(f"{name:<24} {err:.3e}{flag}")
    print(f"max relative error {worst:.3e} (threshold {threshold:g})")
    return EXIT_OK if worst <= threshold else EXIT_INVALID


def cmd_augment(args):
    if not ALPHA_LOW <= args.alpha <= ALPHA_HIGH:
        msg = f"alpha {args.alpha} lies outside [{ALPHA_LOW}, {ALPHA_HIGH}]"
        if args.strict:
            raise InvalidInput(msg)
        print(f"warning: {msg}; proceeding", file=sys.stderr)
    try:
        spec = containers.load_spectrogram(args.input)
    except (OSError, containers.ContainerError) as exc:
        raise DataError(f"cannot read {args.input}: {exc}") from None
    try:
        warped = warp_spectrogram(spec, WarpParams(args.alpha, spec.config.f_max))
    except ValueError as exc:
        raise InvalidInput(str(exc)) from None
    containers.save_spectrogram(args.out, warped)
    print(f"warped {spec.T}x{spec.F} spectrogram with alpha={args.alpha} -> {args.out}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_INVALID)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="speechemo", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_config(sp, required=True):
        sp.add_argument("--config", required=required, help="INI run configuration")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override a config value (repeatable)")

    sp = sub.add_parser("gen-corpus", help="write a synthetic corpus (WAV + manifest.csv)")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--per-class", type=int, required=True)
    sp.add_argument("--imbalanced", action="store_true")
    sp.add_argument("--sample-rate", type=int, default=8000)
    sp.set_defaults(func=cmd_gen_corpus)

    sp = sub.add_parser("prepare", help="cache spectrograms and per-fold statistics")
    sp.add_argument("--manifest", required=True)
    with_config(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_prepare)

    sp = sub.add_parser("train", help="train and evaluate one fold")
    with_config(sp)
    sp.add_argument("--fold", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("cv", help="cross-validate over folds and aggregate")
    with_config(sp, required=False)
    sp.add_argument("--out", required=True)
    sp.add_argument("--folds", help="comma-separated fold ids (default: all ten)")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--import-results", metavar="CSV",
                    help="aggregate existing per-fold rows (fold,session,gender,wa,ua in percent) instead of training")
    sp.set_defaults(func=cmd_cv)

    sp = sub.add_parser("gradcheck", help="finite-difference check of a miniature network")
    with_config(sp)
    sp.add_argument("--precision", choices=("high", "low"), default="high")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("augment", help="warp an EMSP spectrogram along frequency")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--strict", action="store_true", help="reject alpha outside [0.9, 1.1]")
    sp.set_defaults(func=cmd_augment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "cv" and not args.import_results and not args.config:
        parser.error("cv needs --config unless --import-results is given")
    try:
        status = args.func(args)
    except InvalidInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (DataError, DspConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if status is None else status


if __name__ == "__main__":
    sys.exit(main())
