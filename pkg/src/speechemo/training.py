"""Fold training loop, validation-UA model selection and test-time voting."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import net
from .corpus import (DatasetStats, Emotion, FoldSplit, Utterance, compute_stats, normalize,
                     oversample, pad_batch)
from .dsp import Spectrogram
from .metrics import FoldResult, Metrics
from .optim import GradNormLog, LayerGroup, MomentumOptimizer, log_grad_norms
from .vtlp import (AlphaSampler, AugmentMode, AugmentStrategy, WarpParams, sample_alpha, tta_alphas,
                   warp_values)

log = logging.getLogger(__name__)


@dataclass
class TrainOptions:
    batch_size: int = 16
    max_epochs: int = 300
    patience: int = 20
    augment: AugmentStrategy | None = field(default_factory=AugmentStrategy)
    oversample_classes: tuple[Emotion, ...] = (Emotion.HAPPINESS, Emotion.ANGER)
    oversample_factor: int = 2
    seed: int = 0
    dtype: str = "float32"
    groups: Sequence[LayerGroup] = ()
    tta: bool = True
    eval_batch_size: int = 64
    grad_log_every: int = 1
    # stop as soon as accuracy on the unaugmented training set reaches this
    stop_at_train_acc: float | None = None
    track_train_acc: bool = False

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be positive")
        if self.oversample_factor < 1:
            raise ValueError("oversample_factor must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    val_ua: float
    train_acc: float | None = None


class Model:
    """A configuration plus parameters, usable as a batch predictor."""

    def __init__(self, config: net.NetworkConfig, params: net.NetworkParams, batch_size: int = 64):
        self.config = config
        self.params = params
        self.batch_size = batch_size

    def predict_proba(self, arrays: Sequence[np.ndarray]) -> np.ndarray:
        """Eval-mode class probabilities for a list of ``[T, F]`` arrays, in input order."""
        out = np.zeros((len(arrays), self.config.num_classes))
        order = sorted(range(len(arrays)), key=lambda i: arrays[i].shape[0])
        for start in range(0, len(order), self.batch_size):
            idx = order[start:start + self.batch_size]
            batch = pad_batch([(arrays[i], 0) for i in idx], dtype=self.params.dtype)
            out[idx] = net.forward(batch, self.params, self.config).probs
        return out

    __call__ = predict_proba


def tta_vote(probs: np.ndarray) -> int:
    """Plurality over per-copy argmax; ties go to the larger summed probability, then the lower index."""
    probs = np.asarray(probs)
    votes = np.bincount(probs.argmax(axis=1), minlength=probs.shape[1])
    summed = probs.sum(axis=0)
    best = max(range(probs.shape[1]), key=lambda k: (votes[k], summed[k], -k))
    return int(best)


def tta_copies(spec: Spectrogram) -> list[np.ndarray]:
    freqs = spec.bin_frequencies()
    return [warp_values(spec.values, freqs, WarpParams(a, spec.config.f_max)) for a in tta_alphas()]


def tta_predict(model: Callable, spec: Spectrogram) -> Emotion:
    return Emotion(tta_vote(model(tta_copies(spec))))


def tta_predict_many(model: Callable, specs: Sequence[Spectrogram]) -> list[Emotion]:
    copies = [c for s in specs for c in tta_copies(s)]
    probs = np.asarray(model(copies)).reshape(len(specs), len(tta_alphas()), -1)
    return [Emotion(tta_vote(p)) for p in probs]


def predict_many(model: Callable, specs: Sequence[Spectrogram]) -> list[Emotion]:
    probs = np.asarray(model([s.values for s in specs]))
    return [Emotion(int(k)) for k in probs.argmax(axis=1)]


def _warp(spec: Spectrogram, alpha: float) -> np.ndarray:
    if alpha == 1.0:
        return spec.values
    return warp_values(spec.values, spec.bin_frequencies(), WarpParams(alpha, spec.config.f_max))


def train_epoch(model: Model, optimizer: MomentumOptimizer, items: Sequence[Utterance],
                specs: Mapping[str, Spectrogram], rng: np.random.Generator,
                sampler: AlphaSampler | None, options: TrainOptions,
                grad_log: GradNormLog | None = None,
                on_batch: Callable[[list[str]], None] | None = None) -> float:
    """One pass over ``items`` in a seeded random order; returns the mean batch loss."""
    if sampler is not None:
        sampler.new_epoch()
    order = rng.permutation(len(items))
    losses = []
    for start in range(0, len(order), options.batch_size):
        chunk = [items[i] for i in order[start:start + options.batch_size]]
        if on_batch is not None:
            on_batch([u.id for u in chunk])
        arrays = []
        for u in chunk:
            spec = specs[u.id]
            arrays.append(_warp(spec, sampler()) if sampler is not None else spec.values)
        batch = pad_batch(list(zip(arrays, [u.label for u in chunk])), dtype=model.params.dtype)
        loss, grads, out = net.loss_and_grads(batch, model.params, model.config)
        step = optimizer.state.step
        if grad_log is not None and step % options.grad_log_every == 0:
            grad_log.extend(log_grad_norms(grads, model.params.weights, step))
        optimizer.step(grads)
        net.update_running_stats(model.params, out.cache, model.config)
        losses.append(loss)
    if grad_log is not None:
        grad_log.flush()
    return float(np.mean(losses))


def evaluate(model: Model, utts: Sequence[Utterance], specs: Mapping[str, Spectrogram],
             alphas: Sequence[float] | None = None) -> Metrics:
    if alphas is None:
        arrays = [specs[u.id].values for u in utts]
    else:
        arrays = [_warp(specs[u.id], a) for u, a in zip(utts, alphas)]
    pred = np.asarray(model(arrays)).argmax(axis=1)
    return Metrics.from_predictions([int(u.label) for u in utts], pred)


def prepare_fold_data(fold: FoldSplit, utterances: Sequence[Utterance],
                      spectrograms: Mapping[str, Spectrogram]):
    """Partition, compute training-only statistics and normalize every spectrogram used."""
    train, val, test = fold.partition(utterances)
    if not train or not test:
        raise ValueError(f"fold {fold.fold_id} needs both training and test utterances")
    stats = compute_stats(spectrograms[u.id] for u in train)
    used = {u.id for u in (*train, *val, *test)}
    normed = {uid: normalize(spectrograms[uid], stats) for uid in sorted(used)}
    return train, val, test, stats, normed


def run_fold(fold: FoldSplit, utterances: Sequence[Utterance], spectrograms: Mapping[str, Spectrogram],
             config: net.NetworkConfig, options: TrainOptions | None = None,
             grad_log: GradNormLog | None = None,
             on_batch: Callable[[list[str]], None] | None = None,
             on_epoch: Callable[[EpochRecord], None] | None = None) -> FoldResult:
    """Train on the fold's training sessions, select by validation UA, score the test speaker.

    The test partition is touched exactly once, after training, through
    test-time voting over the warped copies (or plain prediction if
    ``options.tta`` is off).
    """
    options = options or TrainOptions()
    train, val, test, stats, specs = prepare_fold_data(fold, utterances, spectrograms)
    n_freq = next(iter(specs.values())).F
    dtype = np.dtype(options.dtype)
    seeds = np.random.SeedSequence([options.seed, fold.fold_id])
    init_seed, order_seed, alpha_seed, val_seed = (int(s.generate_state(1)[0]) for s in seeds.spawn(4))

    params = net.init_params(config, n_freq, seed=init_seed, dtype=dtype)
    model = Model(config, params, options.eval_batch_size)
    optimizer = MomentumOptimizer(params.weights, options.groups)
    items = oversample(train, options.oversample_classes, options.oversample_factor)
    order_rng = np.random.default_rng(order_seed)
    sampler = AlphaSampler(options.augment, np.random.default_rng(alpha_seed)) if options.augment else None
    val_rng = np.random.default_rng(val_seed)
    # validation gets its own random warps only under per-sample augmentation
    val_augment = options.augment is not None and options.augment.mode is AugmentMode.PER_SAMPLE

    best_ua, best_epoch, best_params = -1.0, 0, params.copy()
    history: list[EpochRecord] = []
    epoch = 0
    for epoch in range(1, options.max_epochs + 1):
        loss = train_epoch(model, optimizer, items, specs, order_rng, sampler, options, grad_log, on_batch)
        if val:
            alphas = None
            if val_augment:
                alphas = [sample_alpha(options.augment, val_rng) for _ in val]
            val_ua = evaluate(model, val, specs, alphas).ua
        else:
            val_ua = 0.0
        train_acc = None
        if options.track_train_acc or options.stop_at_train_acc is not None:
            train_acc = evaluate(model, train, specs).wa
        record = EpochRecord(epoch, loss, val_ua, train_acc)
        history.append(record)
        if on_epoch is not None:
            on_epoch(record)
        log.debug("fold %d epoch %d loss %.4f val UA %.3f", fold.fold_id, epoch, loss, val_ua)
        if val_ua > best_ua:
            best_ua, best_epoch, best_params = val_ua, epoch, params.copy()
        if options.stop_at_train_acc is not None and train_acc >= options.stop_at_train_acc:
            break
        if epoch - best_epoch >= options.patience:
            break

    best = Model(config, best_params, options.eval_batch_size)
    test_specs = [specs[u.id] for u in test]
    pred = tta_predict_many(best, test_specs) if options.tta else predict_many(best, test_specs)
    metrics = Metrics.from_predictions([int(u.label) for u in test], [int(p) for p in pred])
    return FoldResult(fold.fold_id, metrics, epoch, best_epoch,
                      history=tuple(history), params=best_params, stats=stats)
