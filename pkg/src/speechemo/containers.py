"""Binary containers: ``EMSP`` cached spectrograms and ``EMCK`` network checkpoints.

All integers and floats are little-endian; tensor payloads are row-major float32.

EMSP v1::

    b"EMSP" u16 version u32 T u32 F u32 sample_rate
    f64 window_ms f64 shift_ms f64 f_max f64 log_floor
    float32[T*F]

EMCK v1::

    b"EMCK" u16 version u32 n  utf8[n] network-config JSON
    u32 n_tensors, then per tensor:
        u32 name_len utf8 name u32 rank u32[rank] dims float32[prod(dims)]

Batch-norm running statistics are stored as tensors prefixed ``running:``.
"""
from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .dsp import Spectrogram, SpectrogramConfig
from .net import ConvLayer, NetworkConfig, NetworkParams

EMSP_MAGIC = b"EMSP"
EMCK_MAGIC = b"EMCK"
FORMAT_VERSION = 1

_EMSP_HEAD = struct.Struct("<4sHIIIdddd")


class ContainerError(ValueError):
    pass


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise ContainerError("truncated container")
    return buf


def _f32(values: np.ndarray) -> bytes:
    return np.ascontiguousarray(values, dtype="<f4").tobytes()


def spectrogram_to_bytes(spec: Spectrogram) -> bytes:
    cfg = spec.config
    head = _EMSP_HEAD.pack(EMSP_MAGIC, FORMAT_VERSION, spec.T, spec.F, spec.sample_rate,
                           cfg.window_ms, cfg.shift_ms, cfg.f_max, cfg.log_floor)
    return head + _f32(spec.values)


def spectrogram_from_bytes(data: bytes) -> Spectrogram:
    if len(data) < _EMSP_HEAD.size:
        raise ContainerError("truncated EMSP header")
    magic, version, T, F, sr, win, shift, fmax, floor = _EMSP_HEAD.unpack_from(data)
    if magic != EMSP_MAGIC:
        raise ContainerError(f"not an EMSP container (magic {magic!r})")
    if version != FORMAT_VERSION:
        raise ContainerError(f"unsupported EMSP version {version}")
    payload = data[_EMSP_HEAD.size:]
    if len(payload) != 4 * T * F:
        raise ContainerError(f"EMSP payload holds {len(payload)} bytes, expected {4 * T * F}")
    values = np.frombuffer(payload, dtype="<f4").reshape(T, F).astype(np.float32)
    return Spectrogram(values, SpectrogramConfig(win, shift, fmax, floor), sr)


def save_spectrogram(path: str | Path, spec: Spectrogram):
    Path(path).write_bytes(spectrogram_to_bytes(spec))


def load_spectrogram(path: str | Path) -> Spectrogram:
    return spectrogram_from_bytes(Path(path).read_bytes())


def config_to_json(config: NetworkConfig, n_freq: int) -> str:
    doc = asdict(config)
    doc["n_freq"] = n_freq
    return json.dumps(doc, sort_keys=True)


def config_from_json(text: str) -> tuple[NetworkConfig, int]:
    doc = json.loads(text)
    n_freq = doc.pop("n_freq")
    doc["conv_layers"] = tuple(
        ConvLayer(c["out_channels"], tuple(c["kernel"]), tuple(c["stride"])) for c in doc["conv_layers"]
    )
    return NetworkConfig(**doc), n_freq


def _put_str(buf, text: str):
    raw = text.encode("utf-8")
    buf.write(struct.pack("<I", len(raw)))
    buf.write(raw)


def _get_str(fh) -> str:
    (n,) = struct.unpack("<I", _read_exact(fh, 4))
    return _read_exact(fh, n).decode("utf-8")


def checkpoint_to_bytes(config: NetworkConfig, params: NetworkParams) -> bytes:
    buf = io.BytesIO()
    buf.write(EMCK_MAGIC + struct.pack("<H", FORMAT_VERSION))
    _put_str(buf, config_to_json(config, params.n_freq))
    tensors = list(params.weights.items()) + [(f"running:{k}", v) for k, v in params.running.items()]
    buf.write(struct.pack("<I", len(tensors)))
    for name, value in tensors:
        value = np.asarray(value)
        _put_str(buf, name)
        buf.write(struct.pack(f"<I{value.ndim}I", value.ndim, *value.shape))
        buf.write(_f32(value))
    return buf.getvalue()


def checkpoint_from_bytes(data: bytes) -> tuple[NetworkConfig, NetworkParams]:
    fh = io.BytesIO(data)
    if _read_exact(fh, 4) != EMCK_MAGIC:
        raise ContainerError("not an EMCK checkpoint")
    (version,) = struct.unpack("<H", _read_exact(fh, 2))
    if version != FORMAT_VERSION:
        raise ContainerError(f"unsupported EMCK version {version}")
    config, n_freq = config_from_json(_get_str(fh))
    (count,) = struct.unpack("<I", _read_exact(fh, 4))
    weights, running = {}, {}
    for _ in range(count):
        name = _get_str(fh)
        (rank,) = struct.unpack("<I", _read_exact(fh, 4))
        dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank))
        size = int(np.prod(dims, dtype=np.int64))
        value = np.frombuffer(_read_exact(fh, 4 * size), dtype="<f4").reshape(dims).astype(np.float32)
        if name.startswith("running:"):
            running[name[len("running:"):]] = value
        else:
            weights[name] = value
    if fh.read(1):
        raise ContainerError("trailing bytes after checkpoint")
    return config, NetworkParams(weights, running, n_freq)


def save_checkpoint(path: str | Path, config: NetworkConfig, params: NetworkParams):
    Path(path).write_bytes(checkpoint_to_bytes(config, params))


def load_checkpoint(path: str | Path) -> tuple[NetworkConfig, NetworkParams]:
    return checkpoint_from_bytes(Path(path).read_bytes())
