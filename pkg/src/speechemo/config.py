"""INI run configuration.

Example::

    [spectrogram]
    f_max = 4000

    [network]
    conv = 16:5x5/1x2, 32:3x3/2x2, 64:3x3/2x2, 64:3x3/2x2
    hidden_size = 128

    [optim]
    eta = 0.01
    lambda = 1e-4

    [group conv]
    patterns = conv.*
    eta = 0.005

    [augment]
    mode = per_sample

    [paths]
    manifest = corpus/manifest.csv

``[group NAME]`` sections are tried in file order; ``[optim]`` supplies both the
inherited defaults and the trailing catch-all group. Relative paths resolve
against the config file's directory. Unknown sections and keys are errors.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .corpus import Emotion
from .dsp import SpectrogramConfig
from .net import ConvLayer, NetworkConfig
from .optim import LayerGroup, OptimConfig
from .training import TrainOptions
from .vtlp import AugmentMode, AugmentStrategy


class ConfigError(ValueError):
    pass


_OPTIM_KEYS = {"eta", "gamma", "beta", "lambda"}
_SCHEMA = {
    "spectrogram": {"window_ms", "shift_ms", "f_max", "log_floor"},
    "network": {"conv", "bilstm_layers", "hidden_size", "seq_batchnorm", "activation", "leak",
                "bn_eps", "bn_momentum"},
    "optim": _OPTIM_KEYS,
    "augment": {"mode", "alpha_low", "alpha_high"},
    "oversample": {"classes", "factor"},
    "train": {"batch_size", "max_epochs", "patience", "seed", "dtype", "tta", "grad_log_every",
              "eval_batch_size"},
    "paths": {"manifest", "cache"},
}


def parse_conv(text: str) -> tuple[ConvLayer, ...]:
    """``"16:5x5/1x2, 32:3x3/2x2"`` -> conv layers (channels:kernel_t x kernel_f/stride_t x stride_f)."""
    layers = []
    for item in text.split(","):
        item = item.strip()
        try:
            ch, rest = item.split(":")
            kernel, _, stride = rest.partition("/")
            kt, kf = (int(v) for v in kernel.lower().split("x"))
            st, sf = (int(v) for v in stride.lower().split("x")) if stride else (1, 1)
            layers.append(ConvLayer(int(ch), (kt, kf), (st, sf)))
        except ValueError as exc:
            raise ConfigError(f"bad conv layer spec {item!r}: {exc}") from None
    return tuple(layers)


def format_conv(layers) -> str:
    return ", ".join(f"{c.out_channels}:{c.kernel[0]}x{c.kernel[1]}/{c.stride[0]}x{c.stride[1]}" for c in layers)


@dataclass
class RunConfig:
    spectrogram: SpectrogramConfig = field(default_factory=SpectrogramConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    groups: list[LayerGroup] = field(default_factory=list)
    train: TrainOptions = field(default_factory=TrainOptions)
    manifest: Path | None = None
    cache: Path | None = None
    source: str = ""

    @property
    def all_groups(self) -> list[LayerGroup]:
        return [*self.groups, LayerGroup(("*",), self.optim)]

    def train_options(self, **overrides) -> TrainOptions:
        return replace(self.train, groups=self.all_groups, **overrides)


def _optim_from(section, base: OptimConfig) -> OptimConfig:
    kw = {}
    for key, attr in (("eta", "eta"), ("gamma", "gamma"), ("beta", "beta"), ("lambda", "lam")):
        if key in section:
            kw[attr] = section.getfloat(key)
    return replace(base, **kw)


def _check_keys(name: str, section, allowed: set[str]):
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"[{name}]: unknown keys {sorted(unknown)}")


def parse_config(text: str, base_dir: str | Path = ".", overrides: dict[str, str] | None = None,
                 source: str = "") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",), default_section="__defaults__")
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    for dotted, value in (overrides or {}).items():
        sect, _, key = dotted.rpartition(".")
        if not sect:
            raise ConfigError(f"override {dotted!r} must look like section.key")
        if not cp.has_section(sect):
            cp.add_section(sect)
        cp[sect][key] = value
    base_dir = Path(base_dir)
    try:
        return _build(cp, base_dir, source)
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from None


def _build(cp: configparser.ConfigParser, base_dir: Path, source: str) -> RunConfig:
    for name in cp.sections():
        if name.startswith("group "):
            _check_keys(name, cp[name], _OPTIM_KEYS | {"patterns"})
        elif name in _SCHEMA:
            _check_keys(name, cp[name], _SCHEMA[name])
        else:
            raise ConfigError(f"unknown section [{name}]")

    def sect(name):
        return cp[name] if cp.has_section(name) else {}

    s = sect("spectrogram")
    spec = SpectrogramConfig(**{k: float(v) for k, v in s.items()})

    n = sect("network")
    kw = {}
    if "conv" in n:
        kw["conv_layers"] = parse_conv(n["conv"])
    for key in ("bilstm_layers", "hidden_size"):
        if key in n:
            kw[key] = int(n[key])
    for key in ("leak", "bn_eps", "bn_momentum"):
        if key in n:
            kw[key] = float(n[key])
    if "seq_batchnorm" in n:
        kw["use_seq_batchnorm"] = cp.getboolean("network", "seq_batchnorm")
    if "activation" in n:
        kw["activation"] = n["activation"].strip()
    network = NetworkConfig(**kw)

    optim = _optim_from(sect("optim"), OptimConfig())
    groups = []
    for name in cp.sections():
        if name.startswith("group "):
            patterns = tuple(p.strip() for p in cp[name].get("patterns", "").split(",") if p.strip())
            if not patterns:
                raise ConfigError(f"[{name}] needs a nonempty 'patterns' list")
            groups.append(LayerGroup(patterns, _optim_from(cp[name], optim)))

    a = sect("augment")
    mode = a.get("mode", "per_sample").strip().lower()
    if mode == "none":
        augment = None
    else:
        try:
            aug_mode = AugmentMode(mode)
        except ValueError:
            raise ConfigError(f"augment mode must be none, per_sample or per_epoch_global, got {mode!r}") from None
        lo = float(a.get("alpha_low", 0.9))
        hi = float(a.get("alpha_high", 1.1))
        augment = AugmentStrategy(aug_mode, (lo, hi))

    o = sect("oversample")
    classes = tuple(Emotion.parse(c) for c in o.get("classes", "happiness, anger").split(",") if c.strip())
    factor = int(o.get("factor", 2))

    t = sect("train")
    train = TrainOptions(
        batch_size=int(t.get("batch_size", 16)),
        max_epochs=int(t.get("max_epochs", 300)),
        patience=int(t.get("patience", 20)),
        augment=augment,
        oversample_classes=classes,
        oversample_factor=factor,
        seed=int(t.get("seed", 0)),
        dtype=t.get("dtype", "float32").strip(),
        tta=cp.getboolean("train", "tta") if "tta" in t else True,
        grad_log_every=int(t.get("grad_log_every", 1)),
        eval_batch_size=int(t.get("eval_batch_size", 64)),
    )
    if train.dtype not in ("float32", "float64"):
        raise ConfigError("train.dtype must be float32 or float64")

    p = sect("paths")
    manifest = base_dir / p["manifest"] if "manifest" in p else None
    cache = base_dir / p["cache"] if "cache" in p else None
    return RunConfig(spec, network, optim, groups, train, manifest, cache, source)


def load_config(path: str | Path, overrides: dict[str, str] | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path.parent, overrides, source=str(path))


def parse_overrides(items) -> dict[str, str]:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        out[key.strip()] = value.strip()
    return out
