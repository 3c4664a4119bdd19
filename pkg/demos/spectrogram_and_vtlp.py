"""
Spectrograms and vocal tract length perturbation
================================================

Turn a synthetic utterance into a log-magnitude spectrogram, then warp its
frequency axis the way training-time augmentation does.
"""
import numpy as np

from speechemo.corpus import Emotion
from speechemo.dsp import SpectrogramConfig, stft_log_magnitude
from speechemo.synth import synth_corpus
from speechemo.vtlp import WarpParams, tta_alphas, warp_frequency, warp_spectrogram

# one utterance per class at 8 kHz
manifest, clips = synth_corpus(seed=0, n_per_class=1)
utt = next(u for u in manifest if u.label is Emotion.ANGER)
clip = clips[utt.id]
print(f"{utt.id}: {clip.samples.size} samples at {clip.sample_rate} Hz")

# 64 ms windows every 32 ms, bins kept up to 4 kHz
config = SpectrogramConfig()
spec = stft_log_magnitude(clip, config)
print(f"spectrogram {spec.T} frames x {spec.F} bins, {spec.bin_hz:.3f} Hz per bin")

# the warp is linear up to 0.9 f_max and then bends to keep f_max fixed
for alpha in (0.9, 1.0, 1.1):
    params = WarpParams(alpha, config.f_max)
    pts = warp_frequency(np.array([0.0, 1000.0, 3600.0, 4000.0]), params)
    print(f"alpha={alpha:.2f}: 0, 1000, 3600, 4000 Hz -> {np.round(pts, 1)}")

# warping moves the energy peak by roughly alpha
freqs = spec.bin_frequencies()
peak = freqs[spec.values.mean(axis=0).argmax()]
for alpha in (0.9, 1.1):
    warped = warp_spectrogram(spec, WarpParams(alpha, config.f_max))
    moved = freqs[warped.values.mean(axis=0).argmax()]
    print(f"alpha={alpha}: mean-spectrum peak {peak:.0f} Hz -> {moved:.0f} Hz")

# test-time voting scores one copy per alpha
print("test-time alphas:", ", ".join(f"{a:.2f}" for a in tta_alphas()))
