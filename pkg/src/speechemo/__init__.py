"""Speech emotion recognition from spectrograms with a CNN + Bi-LSTM, in numpy."""
from .corpus import (DatasetStats, Emotion, FoldSplit, Manifest, PaddedBatch, Utterance, compute_stats,
                     fold_for, load_manifest, make_folds, normalize, oversample, pad_batch)
from .dsp import AudioClip, Spectrogram, SpectrogramConfig, frame_count, read_wav, stft_log_magnitude
from .metrics import Metrics, aggregate, unweighted_accuracy, weighted_accuracy
from .net import ConvLayer, NetworkConfig, NetworkParams, backward, forward, init_params, mask_propagate
from .optim import LayerGroup, OptimConfig, OptimState, log_grad_norms, resolve_groups, step
from .training import Model, TrainOptions, run_fold, tta_predict
from .vtlp import (AugmentMode, AugmentStrategy, WarpParams, sample_alpha, tta_alphas, warp_frequency,
                   warp_spectrogram)

__version__ = "0.1.0"
