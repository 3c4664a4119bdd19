"""Vocal tract length perturbation on spectrogram frequency axes.

Frequencies below ``f0 = f0_ratio * f_max`` are scaled by ``alpha``; the band
``[f0, f_max]`` is remapped linearly so that ``f_max`` stays fixed.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .dsp import Spectrogram

ALPHA_LOW = 0.9
ALPHA_HIGH = 1.1
F0_RATIO = 0.9


@dataclass(frozen=True)
class WarpParams:
    alpha: float
    f_max: float
    f0_ratio: float = F0_RATIO

    def __post_init__(self):
        if not 0.0 < self.f0_ratio < 1.0:
            raise ValueError(f"f0_ratio must lie in (0, 1), got {self.f0_ratio}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.f_max <= 0:
            raise ValueError(f"f_max must be positive, got {self.f_max}")

    @property
    def f0(self) -> float:
        return self.f0_ratio * self.f_max

    @property
    def in_range(self) -> bool:
        return ALPHA_LOW <= self.alpha <= ALPHA_HIGH


class AugmentMode(enum.Enum):
    PER_EPOCH_GLOBAL = "per_epoch_global"
    PER_SAMPLE = "per_sample"


@dataclass(frozen=True)
class AugmentStrategy:
    mode: AugmentMode = AugmentMode.PER_SAMPLE
    alpha_range: tuple[float, float] = (ALPHA_LOW, ALPHA_HIGH)

    def __post_init__(self):
        lo, hi = self.alpha_range
        if not ALPHA_LOW <= lo <= hi <= ALPHA_HIGH:
            raise ValueError(f"alpha range {self.alpha_range} must lie within [0.9, 1.1]")


def warp_frequency(f, params: WarpParams):
    """Piecewise-linear warp ``G(f)``; accepts scalars or arrays."""
    f_arr = np.asarray(f, dtype=np.float64)
    if np.any(f_arr < 0) or np.any(f_arr > params.f_max):
        raise ValueError(f"frequency outside [0, {params.f_max}]")
    a, f0, fm = params.alpha, params.f0, params.f_max
    upper = (fm - a * f0) / (fm - f0) * (f_arr - f0) + a * f0
    out = np.where(f_arr <= f0, a * f_arr, upper)
    return float(out) if out.ndim == 0 else out


def inverse_warp_frequency(g, params: WarpParams):
    """Inverse of :func:`warp_frequency` on ``[0, f_max]``."""
    g_arr = np.asarray(g, dtype=np.float64)
    a, f0, fm = params.alpha, params.f0, params.f_max
    upper = f0 + (g_arr - a * f0) * ((fm - f0) / (fm - a * f0))
    out = np.where(g_arr <= a * f0, g_arr / a, upper)
    return float(out) if out.ndim == 0 else out


def warp_values(values: np.ndarray, bin_freqs: np.ndarray, params: WarpParams) -> np.ndarray:
    """Warp the last axis of ``values`` sampled at ``bin_freqs``.

    Each output bin at frequency ``f`` reads the input at ``G^-1(f)`` by linear
    interpolation between neighbouring bins; reads past the last bin clamp.
    """
    src = inverse_warp_frequency(np.minimum(bin_freqs, params.f_max), params)
    # fractional index into the (uniform) input grid
    pos = src / (bin_freqs[1] - bin_freqs[0]) if bin_freqs.size > 1 else np.zeros(1)
    pos = np.clip(pos, 0.0, bin_freqs.size - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, bin_freqs.size - 1)
    w = pos - lo
    out = values[..., lo] * (1.0 - w) + values[..., hi] * w
    return out.astype(values.dtype, copy=False)


def warp_spectrogram(spec: Spectrogram, params: WarpParams) -> Spectrogram:
    return spec.replace(warp_values(spec.values, spec.bin_frequencies(), params))


def sample_alpha(strategy: AugmentStrategy, rng: np.random.Generator) -> float:
    lo, hi = strategy.alpha_range
    if lo == hi:
        return float(lo)
    return float(rng.uniform(lo, hi))


class AlphaSampler:
    """Hands out alphas according to an augmentation strategy.

    Under ``PER_EPOCH_GLOBAL`` one value is drawn in :meth:`new_epoch` and
    reused for every sample until the next epoch; ``PER_SAMPLE`` draws per call.
    """

    def __init__(self, strategy: AugmentStrategy, rng: np.random.Generator):
        self.strategy = strategy
        self.rng = rng
        self._epoch_alpha: float | None = None

    def new_epoch(self) -> None:
        if self.strategy.mode is AugmentMode.PER_EPOCH_GLOBAL:
            self._epoch_alpha = sample_alpha(self.strategy, self.rng)

    def __call__(self) -> float:
        if self.strategy.mode is AugmentMode.PER_EPOCH_GLOBAL:
            if self._epoch_alpha is None:
                self.new_epoch()
            return self._epoch_alpha
        return sample_alpha(self.strategy, self.rng)


def tta_alphas() -> list[float]:
    """The eleven test-time warp factors 0.90, 0.92, ..., 1.10."""
    return [round(0.9 + 0.02 * k, 2) for k in range(11)]
