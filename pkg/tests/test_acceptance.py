"""The ten acceptance criteria, each at its stated tolerance.

Every test prints one ``PASS``/``FAIL`` line (shown even under output capture)
before asserting, so ``pytest -v tests/test_acceptance.py`` doubles as a report.
"""
import csv
import io
import math
import re
import statistics
import time
from contextlib import redirect_stdout

import numpy as np
import pytest

from conftest import split_corpus, tiny_config
from speechemo import cli, net
from speechemo.corpus import Emotion, Manifest, Utterance, fold_for, make_folds, pad_batch, rarest_classes
from speechemo.dsp import Spectrogram, SpectrogramConfig
from speechemo.metrics import Metrics, aggregate
from speechemo.net import NetworkConfig
from speechemo.optim import OptimConfig, OptimState, default_group, step
from speechemo.training import TrainOptions, run_fold
from speechemo.vtlp import AugmentStrategy, WarpParams, warp_frequency, warp_spectrogram

from test_cli import TABLE2_CSV


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail=""):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}" + (f" ({detail})" if detail else ""))
        assert ok, f"criterion {number} failed: {detail}"
    return emit


def test_c01_gradient_oracle(tmp_path, report):
    ini = tmp_path / "bn.ini"
    ini.write_text("[network]\nseq_batchnorm = yes\nbilstm_layers = 1\n")
    buf = io.StringIO()
    start = time.perf_counter()
    with redirect_stdout(buf):
        code = cli.main(["gradcheck", "--config", str(ini), "--precision", "high"])
    elapsed = time.perf_counter() - start
    worst = float(re.search(r"max relative error (\S+)", buf.getvalue()).group(1))
    n_tensors = len(buf.getvalue().strip().splitlines()) - 1
    ok = code == 0 and worst <= 1e-4 and elapsed < 60 and n_tensors == 2 * 2 + 3 * 2 + 2 + 2
    report(1, "gradient oracle, 2 conv + Bi-LSTM + sequence BN, hidden 8, batch 3",
           ok, f"max rel err {worst:.2e}, {elapsed:.1f} s")


def test_c02_mask_neutrality(report):
    rng = np.random.default_rng(2)
    worst = 0.0
    for trial in range(100):
        cfg = tiny_config(use_seq_batchnorm=bool(trial % 2), bilstm_layers=1 + trial % 3 // 2)
        params = net.init_params(cfg, 18, seed=trial, dtype=np.float64)
        lengths = rng.integers(5, 25, size=rng.integers(2, 6))
        batch = pad_batch([(rng.standard_normal((L, 18)), 0) for L in lengths])
        dirty = batch.values.copy()
        pad = ~batch.mask
        dirty[pad] = rng.standard_normal((int(pad.sum()), 18)) * rng.uniform(1, 1e3)
        mode = "train" if trial % 4 < 2 else "eval"
        a = net.forward(batch, params, cfg, mode).logits
        b = net.forward(type(batch)(dirty, batch.lengths, batch.labels), params, cfg, mode).logits
        worst = max(worst, float(np.max(np.abs(a - b))))
    report(2, "mask neutrality over 100 garbage-padding trials", worst <= 1e-12, f"max |dlogit| {worst:.1e}")


def test_c03_vtlp_identity_and_geometry(report):
    rng = np.random.default_rng(3)
    spec = Spectrogram(rng.standard_normal((20, 257)), SpectrogramConfig(), 8000)
    ident = float(np.max(np.abs(warp_spectrogram(spec, WarpParams(1.0, 4000.0)).values - spec.values)))
    f = rng.uniform(0, 4000, 1000)
    ident = max(ident, float(np.max(np.abs(warp_frequency(f, WarpParams(1.0, 4000.0)) - f))))

    failures = 0
    for _ in range(1000):
        a = rng.uniform(0.9, 1.1)
        f_max = rng.uniform(500.0, 24000.0)
        p = WarpParams(a, f_max)
        f0 = p.f0
        upper_at_f0 = (f_max - a * f0) / (f_max - f0) * (f0 - f0) + a * f0
        f = rng.uniform(0, f_max)
        eq1 = a * f if f <= f0 else (f_max - a * f0) / (f_max - f0) * (f - f0) + a * f0
        ok = (warp_frequency(f0, p) == a * f0 == upper_at_f0
              and warp_frequency(0.0, p) == 0.0
              and warp_frequency(f_max, p) == f_max
              and warp_frequency(f, p) == eq1)
        failures += not ok
    report(3, "VTLP identity at alpha=1, continuity at f0, fixed endpoints", ident <= 1e-9 and failures == 0,
           f"identity err {ident:.1e}, {failures}/1000 geometry failures")


def test_c04_masked_bn_statistics(report):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        B, T, F = rng.integers(1, 6), rng.integers(1, 12), rng.integers(1, 10)
        lengths = rng.integers(1, T + 1, size=B)
        pre = rng.standard_normal((B, T, F)) * rng.uniform(0.1, 10) + rng.uniform(-5, 5)
        for s in range(B):
            pre[s, lengths[s]:] = rng.standard_normal((T - lengths[s], F)) * 1e6
        mean, var = net.seq_batchnorm_stats(pre, lengths)
        valid = [pre[s, t, k] for s in range(B) for t in range(lengths[s]) for k in range(F)]
        b_tf = int(lengths.sum()) * F
        assert len(valid) == b_tf
        o_mean = math.fsum(valid) / b_tf
        o_var = math.fsum((v - o_mean) ** 2 for v in valid) / b_tf
        worst = max(worst, abs(mean - o_mean), abs(var - o_var))
    report(4, "masked sequence-BN statistics vs brute force, 100 batches", worst <= 1e-12, f"max err {worst:.1e}")


def test_c05_optimizer_reductions(report):
    rng = np.random.default_rng(5)
    grads = [{"a": rng.standard_normal((4, 3)), "b": rng.standard_normal(5)} for _ in range(100)]
    w0 = {"a": rng.standard_normal((4, 3)), "b": rng.standard_normal(5)}

    params = {k: v.copy() for k, v in w0.items()}
    state = OptimState.zeros_like(params)
    ref = {k: v.copy() for k, v in w0.items()}
    vel = {k: np.zeros_like(v) for k, v in w0.items()}
    bitwise = True
    for g in grads:
        step(params, g, state, [default_group(OptimConfig(eta=0.02, gamma=0.9, beta=1.0, lam=1e-3))])
        for k in ref:
            vel[k] = 0.9 * vel[k] + 0.02 * (g[k] + 1e-3 * ref[k])
            ref[k] = ref[k] - vel[k]
        bitwise &= all(params[k].tobytes() == ref[k].tobytes() for k in ref)

    worst = 0.0
    for c in (0.5, 2.0, 10.0):
        pa = {k: v.copy() for k, v in w0.items()}
        pb = {k: v.copy() for k, v in w0.items()}
        sa, sb = OptimState(), OptimState()
        for g in grads:
            step(pa, g, sa, [default_group(OptimConfig(eta=0.02, gamma=0.9, beta=0.8, lam=0.0))])
            step(pb, g, sb, [default_group(OptimConfig(eta=0.02 * c, gamma=0.9, beta=0.8 / c, lam=0.0))])
            worst = max(worst, *(float(np.max(np.abs(pa[k] - pb[k]))) for k in pa))
    report(5, "beta=1 equals classical momentum bit-for-bit; (eta, beta) ~ (c*eta, beta/c)",
           bitwise and worst <= 1e-12, f"bitwise={bitwise}, max scale drift {worst:.1e}")


def test_c06_protocol_audit(report):
    utts = tuple(Utterance(f"u{s}{g}{k}", "", Emotion(k % 4), s, g)
                 for s in range(1, 6) for g in "FM" for k in range(4))
    manifest = Manifest(utts)
    folds = make_folds(manifest)
    problems = []
    tested = []
    for f in folds:
        train, val, test = f.partition(manifest)
        train_speakers = {u.speaker for u in train}
        if f.test in train_speakers or f.val in train_speakers:
            problems.append(f"fold {f.fold_id}: speaker leak")
        if f.test[0] in {u.session for u in train}:
            problems.append(f"fold {f.fold_id}: test session in train")
        if {u.id for u in train} & {u.id for u in (*val, *test)}:
            problems.append(f"fold {f.fold_id}: id overlap")
        tested.extend({u.speaker for u in test})
    coverage = sorted(tested) == sorted(manifest.speakers()) and len(tested) == 10
    report(6, "10 folds speaker-disjoint, session-excluded, each speaker tested once",
           len(folds) == 10 and not problems and coverage, "; ".join(problems))


def test_c07_metrics_oracle(report):
    rng = np.random.default_rng(7)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(1, 80))
        y_true = rng.integers(0, 4, n).tolist()
        y_pred = rng.integers(0, 4, n).tolist()
        m = Metrics.from_predictions(y_true, y_pred)
        correct = sum(t == p for t, p in zip(y_true, y_pred))
        recalls = []
        for c in range(4):
            members = [p for t, p in zip(y_true, y_pred) if t == c]
            if members:
                recalls.append(sum(p == c for p in members) / len(members))
        if m.wa != correct / n or m.ua != sum(recalls) / len(recalls):
            mismatches += 1
    skew = Metrics.from_predictions([0] * 97 + [1, 2, 3], [0] * 100)
    report(7, "WA/UA vs brute-force recount on 1000 sets; 97/1/1/1 example",
           mismatches == 0 and skew.wa == 0.97 and skew.ua == 0.25,
           f"{mismatches} mismatches, skewed WA {skew.wa} UA {skew.ua}")


def test_c08_table2_arithmetic(tmp_path, report):
    src = tmp_path / "table2.csv"
    src.write_text(TABLE2_CSV)
    with redirect_stdout(io.StringIO()):
        code = cli.main(["cv", "--import-results", str(src), "--out", str(tmp_path / "agg")])
    r = aggregate(cli.read_results(src)).rounded()
    report(8, "published per-fold rows aggregate to WA 64.5 / UA 61.7",
           code == 0 and r["mean_wa"] == 64.5 and r["mean_ua"] == 61.7, f"WA {r['mean_wa']} UA {r['mean_ua']}")


TRAIN_COUNTS = {Emotion.NEUTRAL: 90, Emotion.SADNESS: 50, Emotion.ANGER: 30, Emotion.HAPPINESS: 30}


def test_c09_learnability_and_augmentation(report):
    utts, specs = split_corpus(0, TRAIN_COUNTS, val_per_class=5, test_per_class=10)
    train, _, test = fold_for(1).partition(utts)
    assert (len(train), len(test)) == (200, 40)

    start = time.perf_counter()
    fit = run_fold(fold_for(1), utts, specs, NetworkConfig(),
                   TrainOptions(seed=0, max_epochs=300, patience=300, stop_at_train_acc=0.95))
    elapsed = time.perf_counter() - start
    reached = fit.history[-1].train_acc
    learn_ok = reached >= 0.95 and fit.epochs_trained <= 300 and elapsed < 600

    augmented, baseline = [], []
    for seed in range(5):
        utts, specs = split_corpus(seed, TRAIN_COUNTS, val_per_class=5, test_per_class=10)
        rare = tuple(sorted(rarest_classes(fold_for(1).partition(utts)[0])))
        assert set(rare) == {Emotion.HAPPINESS, Emotion.ANGER}
        aug = run_fold(fold_for(1), utts, specs, NetworkConfig(),
                       TrainOptions(seed=seed, max_epochs=20, augment=AugmentStrategy(),
                                    oversample_classes=rare, oversample_factor=2, tta=True))
        base = run_fold(fold_for(1), utts, specs, NetworkConfig(),
                        TrainOptions(seed=seed, max_epochs=20, augment=None, oversample_factor=1, tta=False))
        augmented.append(aug.metrics.ua)
        baseline.append(base.metrics.ua)
    med_aug, med_base = statistics.median(augmented), statistics.median(baseline)
    report(9, "default 4+1 net learns the synthetic corpus; VTLP + x2 oversampling helps median UA",
           learn_ok and med_aug >= med_base,
           f"train acc {reached:.3f} after {fit.epochs_trained} epochs in {elapsed:.0f} s; "
           f"median UA {med_aug:.3f} (augmented {[round(u, 3) for u in augmented]}) vs {med_base:.3f} (plain {[round(u, 3) for u in baseline]})")


def test_c10_cv_determinism(tmp_path, report):
    with redirect_stdout(io.StringIO()):
        assert cli.main(["gen-corpus", "--out", str(tmp_path / "corpus"), "--seed", "10", "--per-class", "6"]) == 0
        ini = tmp_path / "run.ini"
        ini.write_text("[network]\nconv = 4:3x3/1x2, 4:3x3/2x2\nhidden_size = 6\n"
                       "[train]\nmax_epochs = 3\nbatch_size = 8\nseed = 21\n"
                       "[paths]\nmanifest = corpus/manifest.csv\n")
        codes = [cli.main(["cv", "--config", str(ini), "--out", str(tmp_path / name)]) for name in ("a", "b")]
    a = (tmp_path / "a" / "results.csv").read_bytes()
    b = (tmp_path / "b" / "results.csv").read_bytes()
    rows = list(csv.DictReader(io.StringIO(a.decode())))
    report(10, "two cv runs with one config give byte-identical results CSVs",
           codes == [0, 0] and a == b and len(rows) == 10, f"{len(rows)} folds, {len(a)} bytes")
