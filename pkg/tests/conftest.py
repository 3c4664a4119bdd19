import numpy as np
import pytest

from speechemo.corpus import Emotion
from speechemo.dsp import SpectrogramConfig, stft_log_magnitude
from speechemo.net import ConvLayer, NetworkConfig
from speechemo.synth import synth_corpus

TINY_CONV = (ConvLayer(3, (3, 3), (1, 2)), ConvLayer(4, (3, 3), (2, 2)))


def tiny_config(**kw) -> NetworkConfig:
    kw.setdefault("conv_layers", TINY_CONV)
    kw.setdefault("hidden_size", 5)
    return NetworkConfig(**kw)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_corpus():
    """All ten speakers with two short utterances per class each, spectrograms precomputed."""
    manifest, clips = synth_corpus(7, 20, duration_range=(0.5, 0.8))
    cfg = SpectrogramConfig()
    specs = {uid: stft_log_magnitude(clip, cfg) for uid, clip in clips.items()}
    return manifest, specs


def split_corpus(seed: int, train_counts: dict, val_per_class: int, test_per_class: int):
    """Fold-1 layout: training speakers from sessions 2-5, val (1, M), test (1, F)."""
    tr, c1 = synth_corpus(seed, 0, class_counts=train_counts,
                          speakers=[(s, g) for s in range(2, 6) for g in "FM"])
    va, c2 = synth_corpus(seed, 0, class_counts={e: val_per_class for e in Emotion}, speakers=[(1, "M")])
    te, c3 = synth_corpus(seed, 0, class_counts={e: test_per_class for e in Emotion}, speakers=[(1, "F")])
    cfg = SpectrogramConfig()
    clips = {**c1, **c2, **c3}
    specs = {uid: stft_log_magnitude(c, cfg) for uid, c in clips.items()}
    return [*tr, *va, *te], specs
