"""Momentum SGD with a separate update scale, L2 regularization and per-layer groups.

Per tensor ``w`` with gradient ``g``::

    g <- g + lambda * w
    v <- gamma * v + eta * g
    w <- w - beta * v

``beta`` multiplies the step without entering the velocity, so ``beta = 1``
is classical momentum.
"""
from __future__ import annotations

import csv
import fnmatch
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class OptimConfig:
    eta: float = 0.01
    gamma: float = 0.9
    beta: float = 1.0
    lam: float = 1e-4

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"learning rate must be positive, got {self.eta}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.gamma}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not self.lam >= 0:
            raise ValueError(f"L2 coefficient must be nonnegative, got {self.lam}")


@dataclass(frozen=True)
class LayerGroup:
    """Parameters whose names match any of ``patterns`` (shell-style) share ``config``."""

    patterns: tuple[str, ...]
    config: OptimConfig

    def matches(self, name: str) -> bool:
        return any(fnmatch.fnmatchcase(name, p) for p in self.patterns)


def default_group(config: OptimConfig | None = None) -> LayerGroup:
    return LayerGroup(("*",), config or OptimConfig())


def resolve_groups(param_names: Iterable[str], groups: Sequence[LayerGroup]) -> dict[str, OptimConfig]:
    """First matching group wins."""
    resolved = {}
    for name in param_names:
        for group in groups:
            if group.matches(name):
                resolved[name] = group.config
                break
        else:
            raise ValueError(f"parameter {name!r} matches no optimizer group and there is no default")
    return resolved


@dataclass
class OptimState:
    velocity: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray]) -> "OptimState":
        return cls({k: np.zeros_like(v) for k, v in params.items()})


def step(params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray], state: OptimState,
         groups: Sequence[LayerGroup] | Mapping[str, OptimConfig]):
    """Apply one update in place; returns ``(params, state)`` for convenience."""
    configs = groups if isinstance(groups, Mapping) else resolve_groups(params, groups)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {name}")
    for name, w in params.items():
        cfg = configs[name]
        g = grads[name]
        if cfg.lam:
            g = g + cfg.lam * w
        v = state.velocity.get(name)
        if v is None:
            v = state.velocity[name] = np.zeros_like(w)
        v *= cfg.gamma
        v += cfg.eta * g
        w -= cfg.beta * v
    state.step += 1
    return params, state


class MomentumOptimizer:
    """Stateful wrapper around :func:`step` for a fixed parameter dict."""

    def __init__(self, params: dict[str, np.ndarray], groups: Sequence[LayerGroup] | None = None):
        self.params = params
        self.groups = list(groups) if groups else [default_group()]
        self.configs = resolve_groups(params, self.groups)
        self.state = OptimState.zeros_like(params)

    def step(self, grads: Mapping[str, np.ndarray]):
        step(self.params, grads, self.state, self.configs)


@dataclass(frozen=True)
class GradLogRecord:
    step: int
    layer: str
    grad_norm: float
    param_norm: float


def log_grad_norms(grads: Mapping[str, np.ndarray], params: Mapping[str, np.ndarray], step: int) -> list[GradLogRecord]:
    return [
        GradLogRecord(step, name, float(np.linalg.norm(g.ravel())), float(np.linalg.norm(params[name].ravel())))
        for name, g in grads.items()
    ]


class GradNormLog:
    """Buffers records in memory and appends them to a CSV file on :meth:`flush`."""

    HEADER = ("step", "layer", "grad_norm", "param_norm")

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self.pending: list[GradLogRecord] = []
        self.n_written = 0
        if self.path:
            with open(self.path, "w", newline="") as fh:
                csv.writer(fh, lineterminator="\n").writerow(self.HEADER)

    def extend(self, records: Iterable[GradLogRecord]):
        self.pending.extend(records)

    def flush(self):
        if self.path and self.pending:
            with open(self.path, "a", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                for r in self.pending:
                    writer.writerow([r.step, r.layer, repr(r.grad_norm), repr(r.param_norm)])
        self.n_written += len(self.pending)
        self.pending.clear()
