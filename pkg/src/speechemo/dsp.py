"""Audio I/O and log-magnitude spectrograms on a linear frequency axis."""
from __future__ import annotations

import math
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ClipTooShort(ValueError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size < 1:
            raise ValueError("audio clip must be a nonempty 1-d sequence")
        if not np.all(np.isfinite(samples)):
            raise ValueError("audio clip contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class SpectrogramConfig:
    window_ms: float = 64.0
    shift_ms: float = 32.0
    f_max: float = 4000.0
    log_floor: float = 1e-6

    def __post_init__(self):
        if self.window_ms <= 0 or self.shift_ms <= 0:
            raise ConfigError("window and shift must be positive")
        if self.shift_ms > self.window_ms:
            raise ConfigError("shift must not exceed the window")
        if self.f_max <= 0:
            raise ConfigError("f_max must be positive")
        if self.log_floor <= 0:
            raise ConfigError("log_floor must be positive")

    def window_samples(self, sample_rate: int) -> int:
        return int(math.floor(self.window_ms * sample_rate / 1000.0 + 0.5))

    def shift_samples(self, sample_rate: int) -> int:
        return int(math.floor(self.shift_ms * sample_rate / 1000.0 + 0.5))

    def n_fft(self, sample_rate: int) -> int:
        return 1 << (self.window_samples(sample_rate) - 1).bit_length()

    def n_freq_bins(self, sample_rate: int) -> int:
        """FFT bins at or below ``f_max``."""
        n_fft = self.n_fft(sample_rate)
        return int(math.floor(self.f_max * n_fft / sample_rate + 1e-9)) + 1

    def check(self, sample_rate: int):
        if self.f_max > sample_rate / 2:
            raise ConfigError(
                f"f_max={self.f_max} Hz exceeds the Nyquist frequency {sample_rate / 2} Hz"
            )


@dataclass
class Spectrogram:
    """Log-magnitude matrix of shape ``[T, F]`` plus the geometry that produced it."""

    values: np.ndarray
    config: SpectrogramConfig = field(default_factory=SpectrogramConfig)
    sample_rate: int = 16000

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise ValueError(f"spectrogram must be [T, F] with T >= 1, got {self.values.shape}")

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def F(self) -> int:
        return self.values.shape[1]

    @property
    def bin_hz(self) -> float:
        return self.sample_rate / self.config.n_fft(self.sample_rate)

    def bin_frequencies(self) -> np.ndarray:
        return np.arange(self.F) * self.bin_hz

    def replace(self, values: np.ndarray) -> "Spectrogram":
        return Spectrogram(values, self.config, self.sample_rate)


def frame_count(num_samples: int, window: int, shift: int) -> int:
    if num_samples < window:
        raise ClipTooShort(f"clip too short: {num_samples} samples < window of {window}")
    return (num_samples - window) // shift + 1


def frame_signal(samples: np.ndarray, window: int, shift: int) -> np.ndarray:
    n = frame_count(samples.size, window, shift)
    frames = np.lib.stride_tricks.sliding_window_view(samples, window)[::shift]
    return frames[:n]


def stft_log_magnitude(clip: AudioClip, config: SpectrogramConfig | None = None) -> Spectrogram:
    config = config or SpectrogramConfig()
    sr = clip.sample_rate
    config.check(sr)
    window = config.window_samples(sr)
    shift = config.shift_samples(sr)
    n_fft = config.n_fft(sr)
    frames = frame_signal(clip.samples, window, shift)
    # periodic Hann
    hann = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(window) / window)
    mag = np.abs(np.fft.rfft(frames * hann, n=n_fft, axis=1))
    mag = mag[:, : config.n_freq_bins(sr)]
    return Spectrogram(np.log(mag + config.log_floor), config, sr)


def read_wav(path: str | Path) -> AudioClip:
    """Read 16-bit mono PCM, scaled to [-1, 1)."""
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1:
            raise ValueError(f"{path}: expected mono audio, got {w.getnchannels()} channels")
        if w.getsampwidth() != 2:
            raise ValueError(f"{path}: expected 16-bit samples, got {8 * w.getsampwidth()}-bit")
        sr = w.getframerate()
        n = w.getnframes()
        raw = w.readframes(n)
    if len(raw) != 2 * n:
        raise ValueError(f"{path}: truncated audio data")
    pcm = np.frombuffer(raw, dtype="<i2").astype(np.float64)
    return AudioClip(pcm / 32768.0, sr)


def write_wav(path: str | Path, clip: AudioClip):
    pcm = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(clip.sample_rate)
        w.writeframes(pcm.tobytes())
