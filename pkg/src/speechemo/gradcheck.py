"""Central finite-difference verification of the analytic backward pass."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from . import net
from .corpus import PaddedBatch


def miniature(config: net.NetworkConfig, hidden_size: int = 8, max_channels: int = 4,
              max_conv: int = 2) -> net.NetworkConfig:
    """Shrink a configuration for cheap checking, keeping its layer types and strides."""
    convs = tuple(replace(c, out_channels=min(c.out_channels, max_channels))
                  for c in config.conv_layers[:max_conv])
    return replace(config, conv_layers=convs, hidden_size=hidden_size,
                   bilstm_layers=min(config.bilstm_layers, 2))


def min_input_length(conv_layers, out_len: int = 1, axis: int = 0) -> int:
    """Shortest input along ``axis`` (0 time, 1 frequency) that leaves ``out_len`` outputs."""
    n = out_len
    for layer in reversed(conv_layers):
        n = (n - 1) * layer.stride[axis] + layer.kernel[axis]
    return n


def random_batch(config: net.NetworkConfig, batch: int = 3, out_lengths=(3, 2, 4), n_freq=None,
                 seed: int = 0, dtype=np.float64) -> PaddedBatch:
    """Mixed-length batch with garbage-free zero padding."""
    rng = np.random.default_rng(seed)
    if n_freq is None:
        n_freq = min_input_length(config.conv_layers, 3, axis=1)
    lengths = np.array([min_input_length(config.conv_layers, out_lengths[i % len(out_lengths)])
                        for i in range(batch)])
    values = rng.standard_normal((batch, lengths.max(), n_freq)).astype(dtype)
    for i, L in enumerate(lengths):
        values[i, L:] = 0.0
    labels = rng.integers(0, config.num_classes, batch)
    return PaddedBatch(values, lengths, labels)


def numerical_grads(batch: PaddedBatch, params: net.NetworkParams, config: net.NetworkConfig,
                    step: float = 1e-5) -> dict[str, np.ndarray]:
    def loss():
        out = net.forward(batch, params, config, mode="train")
        return net.cross_entropy(out.probs, batch.labels)

    grads = {}
    for name, w in params.weights.items():
        g = np.zeros_like(w)
        flat_w, flat_g = w.reshape(-1), g.reshape(-1)
        for i in range(flat_w.size):
            old = flat_w[i]
            flat_w[i] = old + step
            up = loss()
            flat_w[i] = old - step
            down = loss()
            flat_w[i] = old
            flat_g[i] = (up - down) / (2 * step)
        grads[name] = g
    return grads


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest absolute disagreement, relative to the tensor's gradient scale."""
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
    return float(np.abs(analytic - numeric).max() / scale)


def check_gradients(config: net.NetworkConfig, seed: int = 0, batch: int = 3,
                    dtype=np.float64, step: float = 1e-5) -> dict[str, float]:
    """Max relative error per parameter tensor between backprop and finite differences.

    The analytic pass runs in ``dtype``. Finite differences always run in
    float64 at the same point, since float32 loss rounding swamps any usable
    step size.
    """
    data = random_batch(config, batch, seed=seed, dtype=dtype)
    params = net.init_params(config, data.values.shape[2], seed=seed + 1, dtype=dtype)
    out = net.forward(data, params, config, mode="train")
    analytic = net.backward(out.cache, data.labels, params, config)
    data64 = PaddedBatch(data.values.astype(np.float64), data.lengths, data.labels)
    params64 = replace(params, weights={k: v.astype(np.float64) for k, v in params.weights.items()})
    numeric = numerical_grads(data64, params64, config, step)
    return {name: relative_error(analytic[name].astype(np.float64), numeric[name]) for name in params.weights}
