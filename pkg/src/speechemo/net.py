"""CNN -> masked Bi-LSTM -> dense softmax classifier, forward and backward in numpy.

Tensors are channels-last: a batch enters as ``[B, T, F]`` and each conv layer
produces ``[B, T', F', C]``. Convolutions are 'valid', so every output step
below a sample's propagated length depends on valid input steps only; the
recurrent layers then skip everything past that length.

Parameter names::

    conv.{i}.kernel        [k_t, k_f, C_in, C_out]
    conv.{i}.bias          [C_out]
    bilstm.{l}.{fwd,bwd}.W_x  [D, 4H]   gate order i, f, g, o
    bilstm.{l}.{fwd,bwd}.W_h  [H, 4H]
    bilstm.{l}.{fwd,bwd}.b    [4H]
    bilstm.{l}.bn.gamma    [8H]      only with sequence batch norm
    bilstm.{l}.bn.beta     [8H]
    dense.W                [2H, n_classes]
    dense.b                [n_classes]
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import PaddedBatch


class SampleTooShort(ValueError):
    pass


@dataclass(frozen=True)
class ConvLayer:
    out_channels: int
    kernel: tuple[int, int]
    stride: tuple[int, int] = (1, 1)

    def __post_init__(self):
        if self.out_channels < 1 or min(self.kernel) < 1 or min(self.stride) < 1:
            raise ValueError(f"invalid conv layer {self}")


DEFAULT_CONV = (
    ConvLayer(16, (5, 5), (1, 2)),
    ConvLayer(32, (3, 3), (2, 2)),
    ConvLayer(64, (3, 3), (2, 2)),
    ConvLayer(64, (3, 3), (2, 2)),
)

ACTIVATIONS = ("leaky_relu", "relu", "tanh")


@dataclass(frozen=True)
class NetworkConfig:
    conv_layers: tuple[ConvLayer, ...] = DEFAULT_CONV
    bilstm_layers: int = 1
    hidden_size: int = 128
    use_seq_batchnorm: bool = False
    num_classes: int = 4
    activation: str = "leaky_relu"
    leak: float = 0.01
    bn_eps: float = 1e-5
    bn_momentum: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "conv_layers", tuple(self.conv_layers))
        if not 1 <= len(self.conv_layers) <= 6:
            raise ValueError("between 1 and 6 conv layers are supported")
        if not 1 <= self.bilstm_layers <= 4:
            raise ValueError("between 1 and 4 Bi-LSTM layers are supported")
        if self.hidden_size < 1:
            raise ValueError("hidden_size must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if not 0.0 <= self.leak <= 1.0:
            raise ValueError("leak must lie in [0, 1]")
        if not 0.0 <= self.bn_momentum < 1.0:
            raise ValueError("bn_momentum must lie in [0, 1)")

    def conv_widths(self, n_freq: int) -> list[int]:
        """Frequency width after each conv layer."""
        widths = []
        for layer in self.conv_layers:
            n_freq = (n_freq - layer.kernel[1]) // layer.stride[1] + 1
            if n_freq < 1:
                raise ValueError("frequency axis too narrow for the conv stack")
            widths.append(n_freq)
        return widths

    def lstm_input_size(self, n_freq: int) -> int:
        return self.conv_widths(n_freq)[-1] * self.conv_layers[-1].out_channels


@dataclass
class NetworkParams:
    weights: dict[str, np.ndarray]
    running: dict[str, np.ndarray] = field(default_factory=dict)
    n_freq: int = 0

    def copy(self) -> "NetworkParams":
        return NetworkParams({k: v.copy() for k, v in self.weights.items()},
                             {k: v.copy() for k, v in self.running.items()}, self.n_freq)

    @property
    def dtype(self):
        return next(iter(self.weights.values())).dtype


def mask_propagate(length, conv_layers: Sequence[ConvLayer]):
    """Valid length after each stride; works elementwise on arrays."""
    arr = np.asarray(length, dtype=np.int64)
    for i, layer in enumerate(conv_layers):
        k, s = layer.kernel[0], layer.stride[0]
        if np.any(arr < k):
            raise SampleTooShort(f"sample too short for architecture (conv layer {i})")
        arr = (arr - k) // s + 1
    return int(arr) if arr.ndim == 0 else arr


def init_params(config: NetworkConfig, n_freq: int, seed: int = 0, dtype=np.float32) -> NetworkParams:
    rng = np.random.default_rng(seed)
    w: dict[str, np.ndarray] = {}
    c_in = 1
    for i, layer in enumerate(config.conv_layers):
        kt, kf = layer.kernel
        fan_in = kt * kf * c_in
        lim = np.sqrt(6.0 / fan_in)
        w[f"conv.{i}.kernel"] = rng.uniform(-lim, lim, (kt, kf, c_in, layer.out_channels))
        w[f"conv.{i}.bias"] = np.zeros(layer.out_channels)
        c_in = layer.out_channels
    H = config.hidden_size
    d_in = config.lstm_input_size(n_freq)
    running = {}
    for l in range(config.bilstm_layers):
        for direction in ("fwd", "bwd"):
            p = f"bilstm.{l}.{direction}"
            lim = np.sqrt(3.0 / d_in)
            w[f"{p}.W_x"] = rng.uniform(-lim, lim, (d_in, 4 * H))
            blocks = []
            for _ in range(4):
                q, r = np.linalg.qr(rng.standard_normal((H, H)))
                blocks.append(q * np.sign(np.diag(r)))
            w[f"{p}.W_h"] = np.concatenate(blocks, axis=1)
            b = np.zeros(4 * H)
            b[H:2 * H] = 1.0
            w[f"{p}.b"] = b
        if config.use_seq_batchnorm:
            w[f"bilstm.{l}.bn.gamma"] = np.ones(8 * H)
            w[f"bilstm.{l}.bn.beta"] = np.zeros(8 * H)
            running[f"bilstm.{l}.bn.mean"] = np.zeros(())
            running[f"bilstm.{l}.bn.var"] = np.ones(())
        d_in = 2 * H
    lim = np.sqrt(3.0 / (2 * H))
    w["dense.W"] = rng.uniform(-lim, lim, (2 * H, config.num_classes))
    w["dense.b"] = np.zeros(config.num_classes)
    w = {k: v.astype(dtype) for k, v in w.items()}
    running = {k: v.astype(dtype) for k, v in running.items()}
    return NetworkParams(w, running, n_freq)


# -- elementwise helpers -------------------------------------------------------

def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def _act(z, config):
    if config.activation == "leaky_relu":
        # valid for 0 <= leak <= 1
        return np.maximum(z, config.leak * z)
    if config.activation == "relu":
        return np.maximum(z, 0)
    return np.tanh(z)


def _act_backward(da, z, a, config):
    if config.activation == "tanh":
        return da * (1.0 - a * a)
    leak = config.leak if config.activation == "leaky_relu" else 0.0
    # slope = leak + (1 - leak) * [z > 0], built arithmetically for speed
    slope = (z > 0).view(np.uint8).astype(da.dtype)
    slope *= 1.0 - leak
    slope += leak
    slope *= da
    return slope


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(probs, labels) -> float:
    p = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(p)))


def _check_finite(name, x, mask=None):
    valid = x if mask is None else x[mask]
    if not np.all(np.isfinite(valid)):
        raise FloatingPointError(f"non-finite activation in {name}")


def _dense(x, W):
    """``x[..., D] @ W[D, N]`` as a single 2-d GEMM."""
    return (x.reshape(-1, x.shape[-1]) @ W).reshape(*x.shape[:-1], W.shape[1])


# -- convolution ---------------------------------------------------------------

def _im2col(x, kernel, stride):
    """``[B, T, F, C]`` -> ``[B, T', F', k_t, k_f, C]`` (a copy)."""
    kt, kf = kernel
    st, sf = stride
    win = np.lib.stride_tricks.sliding_window_view(x, (kt, kf), axis=(1, 2))
    win = win[:, ::st, ::sf]  # [B, T', F', C, kt, kf]
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))


def _col2im(dcols, x_shape, kernel, stride):
    B, To, Fo, kt, kf, C = dcols.shape
    st, sf = stride
    dx = np.zeros(x_shape, dtype=dcols.dtype)
    for i in range(kt):
        for j in range(kf):
            dx[:, i:i + st * (To - 1) + 1:st, j:j + sf * (Fo - 1) + 1:sf, :] += dcols[:, :, :, i, j, :]
    return dx


# -- recurrent layer -----------------------------------------------------------

def seq_batchnorm_stats(pre, lengths):
    """Scalar mean and (biased) variance over batch, valid steps and features.

    The divisor is ``sum(lengths) * n_features``; padded steps never contribute.
    """
    pre = np.asarray(pre)
    lengths = np.asarray(lengths)
    count = int(lengths.sum()) * pre.shape[-1]
    if count == 0:
        raise ValueError("no valid elements for batch statistics")
    mask = np.arange(pre.shape[1])[None, :] < lengths[:, None]
    valid = pre[mask]
    mean = valid.sum() / count
    var = ((valid - mean) ** 2).sum() / count
    return mean, var


def seq_batchnorm_apply(z, mean, var, gamma, beta, eps):
    return gamma * ((z - mean) / np.sqrt(var + eps)) + beta


def _lstm_direction(y, mask, W_h, b, reverse):
    """Run one direction over gate inputs ``y`` ``[B, T, 4H]``.

    State freezes on invalid steps, so the forward pass ends holding the
    last valid step and the reverse pass starts from zeros at each sample's
    final valid step.
    """
    B, T, _ = y.shape
    H = W_h.shape[0]
    h = np.zeros((B, H), dtype=y.dtype)
    c = np.zeros((B, H), dtype=y.dtype)
    out = np.zeros((B, T, H), dtype=y.dtype)
    steps = []
    order = range(T - 1, -1, -1) if reverse else range(T)
    for t in order:
        g = y[:, t] + h @ W_h + b
        i = _sigmoid(g[:, :H])
        f = _sigmoid(g[:, H:2 * H])
        gg = np.tanh(g[:, 2 * H:3 * H])
        o = _sigmoid(g[:, 3 * H:])
        c_new = f * c + i * gg
        tc = np.tanh(c_new)
        h_new = o * tc
        m = mask[:, t, None]
        steps.append((t, h, c, i, f, gg, o, tc))
        c = np.where(m, c_new, c)
        h = np.where(m, h_new, h)
        out[:, t] = np.where(m, h_new, 0.0)
    return out, h, steps


def _lstm_direction_backward(dout, dh_final, steps, mask, W_h):
    B, T, H = dout.shape
    dy = np.zeros((B, T, 4 * H), dtype=dout.dtype)
    dW_h = np.zeros_like(W_h)
    db = np.zeros(4 * H, dtype=dout.dtype)
    dh = dh_final.copy()
    dc = np.zeros_like(dh)
    for t, h_prev, c_prev, i, f, gg, o, tc in reversed(steps):
        m = mask[:, t, None].astype(dout.dtype)
        dh_new = m * (dh + dout[:, t])
        dc_new = m * dc + dh_new * o * (1.0 - tc * tc)
        dG = np.concatenate([
            dc_new * gg * i * (1.0 - i),
            dc_new * c_prev * f * (1.0 - f),
            dc_new * i * (1.0 - gg * gg),
            dh_new * tc * o * (1.0 - o),
        ], axis=1)
        dy[:, t] = dG
        dW_h += h_prev.T @ dG
        db += dG.sum(axis=0)
        dh = (1.0 - m) * dh + dG @ W_h.T
        dc = (1.0 - m) * dc + dc_new * f
    return dy, dW_h, db


@dataclass
class ForwardCache:
    batch_lengths: np.ndarray
    labels: np.ndarray | None
    conv: list = field(default_factory=list)
    lstm: list = field(default_factory=list)
    conv_out_shape: tuple = ()
    summary: np.ndarray | None = None
    probs: np.ndarray | None = None
    bn_stats: dict = field(default_factory=dict)
    mask: np.ndarray | None = None


@dataclass
class ForwardOutput:
    probs: np.ndarray
    logits: np.ndarray
    lengths: np.ndarray
    cache: ForwardCache | None = None


def forward(batch: PaddedBatch, params: NetworkParams, config: NetworkConfig,
            mode: str = "eval") -> ForwardOutput:
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'")
    train = mode == "train"
    w = params.weights
    dtype = params.dtype
    x = np.asarray(batch.values, dtype=dtype)[..., None]
    if x.shape[2] != params.n_freq:
        raise ValueError(f"batch has {x.shape[2]} frequency bins, network expects {params.n_freq}")
    lengths = np.asarray(batch.lengths)
    cache = ForwardCache(lengths, getattr(batch, "labels", None)) if train else None

    cur = lengths
    for i, layer in enumerate(config.conv_layers):
        cur = mask_propagate(cur, [layer])
        K = w[f"conv.{i}.kernel"]
        cols = _im2col(x, layer.kernel, layer.stride)
        z = _dense(cols.reshape(*cols.shape[:3], -1), K.reshape(-1, K.shape[-1])) + w[f"conv.{i}.bias"]
        a = _act(z, config)
        mask = np.arange(a.shape[1])[None, :] < cur[:, None]
        _check_finite(f"conv.{i}", a, mask)
        if train:
            cache.conv.append((x.shape, cols, z, a))
        x = a

    B, To, Fo, C = x.shape
    seq = x.reshape(B, To, Fo * C)
    mask = np.arange(To)[None, :] < cur[:, None]
    H = config.hidden_size
    h_f = h_b = None
    for l in range(config.bilstm_layers):
        p = f"bilstm.{l}"
        W_x = np.concatenate([w[f"{p}.fwd.W_x"], w[f"{p}.bwd.W_x"]], axis=1)
        z = _dense(seq, W_x)
        bn = None
        if config.use_seq_batchnorm:
            if train:
                mean, var = seq_batchnorm_stats(z, cur)
                cache.bn_stats[l] = (mean, var)
            else:
                mean, var = params.running[f"{p}.bn.mean"], params.running[f"{p}.bn.var"]
            inv = 1.0 / np.sqrt(var + config.bn_eps)
            zhat = (z - mean) * inv
            y = w[f"{p}.bn.gamma"] * zhat + w[f"{p}.bn.beta"]
            bn = (zhat, inv)
        else:
            y = z
        out_f, h_f, steps_f = _lstm_direction(y[..., :4 * H], mask, w[f"{p}.fwd.W_h"], w[f"{p}.fwd.b"], False)
        out_b, h_b, steps_b = _lstm_direction(y[..., 4 * H:], mask, w[f"{p}.bwd.W_h"], w[f"{p}.bwd.b"], True)
        new_seq = np.concatenate([out_f, out_b], axis=2)
        _check_finite(p, new_seq, mask)
        if train:
            cache.lstm.append((seq, W_x, bn, steps_f, steps_b))
        seq = new_seq

    summary = np.concatenate([h_f, h_b], axis=1)
    logits = summary @ w["dense.W"] + w["dense.b"]
    _check_finite("dense", logits)
    probs = softmax(logits)
    if train:
        cache.conv_out_shape = (B, To, Fo, C)
        cache.summary = summary
        cache.probs = probs
        cache.mask = mask
    return ForwardOutput(probs, logits, cur, cache)


def backward(cache: ForwardCache, labels, params: NetworkParams, config: NetworkConfig) -> dict[str, np.ndarray]:
    """Gradients of the mean cross-entropy with respect to every weight."""
    w = params.weights
    grads: dict[str, np.ndarray] = {}
    labels = np.asarray(labels)
    B = len(labels)
    dlogits = cache.probs.copy()
    dlogits[np.arange(B), labels] -= 1.0
    dlogits /= B
    grads["dense.W"] = cache.summary.T @ dlogits
    grads["dense.b"] = dlogits.sum(axis=0)
    dsummary = dlogits @ w["dense.W"].T

    H = config.hidden_size
    mask = cache.mask
    dh_f, dh_b = dsummary[:, :H], dsummary[:, H:]
    dseq = None
    for l in reversed(range(config.bilstm_layers)):
        p = f"bilstm.{l}"
        seq, W_x, bn, steps_f, steps_b = cache.lstm[l]
        if dseq is None:
            dout = np.zeros((B, mask.shape[1], 2 * H), dtype=dsummary.dtype)
        else:
            dout = dseq
        dy_f, grads[f"{p}.fwd.W_h"], grads[f"{p}.fwd.b"] = _lstm_direction_backward(
            dout[..., :H], dh_f, steps_f, mask, w[f"{p}.fwd.W_h"])
        dy_b, grads[f"{p}.bwd.W_h"], grads[f"{p}.bwd.b"] = _lstm_direction_backward(
            dout[..., H:], dh_b, steps_b, mask, w[f"{p}.bwd.W_h"])
        dy = np.concatenate([dy_f, dy_b], axis=2)
        if bn is not None:
            zhat, inv = bn
            m = mask[..., None]
            zhat = np.where(m, zhat, 0.0)
            grads[f"{p}.bn.gamma"] = (dy * zhat).sum(axis=(0, 1))
            grads[f"{p}.bn.beta"] = dy.sum(axis=(0, 1))
            dzhat = dy * w[f"{p}.bn.gamma"]
            count = int(mask.sum()) * dy.shape[2]
            mean_d = dzhat.sum() / count
            mean_dz = (dzhat * zhat).sum() / count
            dz = np.where(m, inv * (dzhat - mean_d - zhat * mean_dz), 0.0)
        else:
            dz = dy
        dW_x = seq.reshape(-1, seq.shape[2]).T @ dz.reshape(-1, dz.shape[2])
        grads[f"{p}.fwd.W_x"] = dW_x[:, :4 * H]
        grads[f"{p}.bwd.W_x"] = dW_x[:, 4 * H:]
        dseq = _dense(dz, W_x.T)
        dh_f = np.zeros_like(dh_f)
        dh_b = np.zeros_like(dh_b)

    dx = dseq.reshape(cache.conv_out_shape)
    for i in reversed(range(len(config.conv_layers))):
        layer = config.conv_layers[i]
        x_shape, cols, z, a = cache.conv[i]
        dz = _act_backward(dx, z, a, config)
        K = w[f"conv.{i}.kernel"]
        flat_cols = cols.reshape(-1, int(np.prod(cols.shape[3:])))
        flat_dz = dz.reshape(-1, dz.shape[-1])
        grads[f"conv.{i}.kernel"] = (flat_cols.T @ flat_dz).reshape(K.shape)
        grads[f"conv.{i}.bias"] = flat_dz.sum(axis=0)
        if i > 0:
            dcols = (flat_dz @ K.reshape(-1, K.shape[-1]).T).reshape(cols.shape)
            dx = _col2im(dcols, x_shape, layer.kernel, layer.stride)
    return grads


def update_running_stats(params: NetworkParams, cache: ForwardCache, config: NetworkConfig):
    """Fold the batch statistics of a training forward pass into the running averages."""
    mom = config.bn_momentum
    for l, (mean, var) in cache.bn_stats.items():
        rm = params.running[f"bilstm.{l}.bn.mean"]
        rv = params.running[f"bilstm.{l}.bn.var"]
        params.running[f"bilstm.{l}.bn.mean"] = (mom * rm + (1 - mom) * mean).astype(rm.dtype)
        params.running[f"bilstm.{l}.bn.var"] = (mom * rv + (1 - mom) * var).astype(rv.dtype)


def loss_and_grads(batch: PaddedBatch, params: NetworkParams, config: NetworkConfig):
    out = forward(batch, params, config, mode="train")
    loss = cross_entropy(out.probs, batch.labels)
    return loss, backward(out.cache, batch.labels, params, config), out
