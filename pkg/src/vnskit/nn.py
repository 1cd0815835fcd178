"""Numpy building blocks for the reference forward passes, plus weight files.

Feature maps are HxWxC arrays. Convolution kernels are stored as
``(kh, kw, cin, cout)``, transposed-convolution kernels as ``(cin, 2, 2, cout)``
and linear weights as ``(in, out)``. Parameters live in flat ``{name: array}``
dicts with dotted names.
"""
from __future__ import annotations

import json
import struct

import numpy as np
from scipy.special import erf

from .data import ShapeError

MAGIC = b"VNSW"
LN_EPS = 1e-6


# ---------------------------------------------------------------- parameters

class ParamBuilder:
    """Creates seeded parameters: uniform in [-k, k] with k = 1/sqrt(fan_in), zero biases.

    Values are rounded through float32 so that a save/load round trip is exact.
    """

    def __init__(self, rng, params=None):
        self.rng = rng
        self.params = {} if params is None else params

    def _uniform(self, shape, fan_in):
        k = 1.0 / np.sqrt(fan_in)
        return self.rng.uniform(-k, k, size=shape).astype(np.float32).astype(np.float64)

    def conv(self, name, kh, kw, cin, cout):
        self.params[f"{name}.w"] = self._uniform((kh, kw, cin, cout), kh * kw * cin)
        self.params[f"{name}.b"] = np.zeros(cout)

    def conv_t(self, name, cin, cout):
        self.params[f"{name}.w"] = self._uniform((cin, 2, 2, cout), cin * 4)
        self.params[f"{name}.b"] = np.zeros(cout)

    def linear(self, name, cin, cout):
        self.params[f"{name}.w"] = self._uniform((cin, cout), cin)
        self.params[f"{name}.b"] = np.zeros(cout)

    def norm(self, name, dim):
        self.params[f"{name}.g"] = np.ones(dim)
        self.params[f"{name}.b"] = np.zeros(dim)

    def vector(self, name, shape, scale=1.0):
        v = self.rng.normal(size=shape) * scale
        self.params[name] = v.astype(np.float32).astype(np.float64)


def sub(params, prefix):
    """View of the parameters under ``prefix.`` with the prefix stripped."""
    p = prefix + "."
    return {k[len(p):]: v for k, v in params.items() if k.startswith(p)}


def count(params, prefix=None) -> int:
    items = params if prefix is None else sub(params, prefix)
    return int(sum(v.size for v in items.values()))


# ---------------------------------------------------------------- activations

def sigmoid(x):
    x = np.asarray(x, np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def relu(x):
    return np.maximum(x, 0.0)


def softmax(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def layer_norm(x, p, eps=LN_EPS):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * p["g"] + p["b"]


# ---------------------------------------------------------------- layers

def linear(x, p):
    w = p["w"]
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear expects {w.shape[0]} inputs, got {x.shape[-1]}")
    return x @ w + p["b"]


def mlp(x, p, n_layers, act=relu):
    for i in range(n_layers):
        x = linear(x, sub(p, str(i)))
        if i < n_layers - 1:
            x = act(x)
    return x


def conv2d(x, p):
    """Stride-1 convolution with zero 'same' padding (odd kernels)."""
    w, b = p["w"], p["b"]
    kh, kw, cin, cout = w.shape
    if x.ndim != 3 or x.shape[2] != cin:
        raise ShapeError(f"conv expects HxWx{cin}, got {x.shape}")
    h, wd = x.shape[:2]
    ph, pw = kh // 2, kw // 2
    if kh == 1 and kw == 1:
        return x @ w[0, 0] + b
    xp = np.pad(x, ((ph, ph), (pw, pw), (0, 0)))
    out = np.zeros((h, wd, cout))
    for i in range(kh):
        for j in range(kw):
            out += xp[i : i + h, j : j + wd] @ w[i, j]
    return out + b


def conv_transpose2x2(x, p):
    """Kernel-2, stride-2 transposed convolution: each cell expands to a 2x2 block."""
    w, b = p["w"], p["b"]
    cin, _, _, cout = w.shape
    if x.ndim != 3 or x.shape[2] != cin:
        raise ShapeError(f"transposed conv expects HxWx{cin}, got {x.shape}")
    h, wd = x.shape[:2]
    y = np.einsum("hwc,cabo->hawbo", x, w).reshape(2 * h, 2 * wd, cout)
    return y + b


def _interp_matrix(n, factor):
    """Linear interpolation weights for half-pixel-centred upsampling by ``factor``."""
    m = n * factor
    src = (np.arange(m) + 0.5) / factor - 0.5
    src = np.clip(src, 0, n - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n - 1)
    t = src - lo
    a = np.zeros((m, n))
    a[np.arange(m), lo] += 1 - t
    a[np.arange(m), hi] += t
    return a


def upsample_bilinear(x, factor):
    ah = _interp_matrix(x.shape[0], factor)
    aw = _interp_matrix(x.shape[1], factor)
    return np.einsum("yh,hwc,xw->yxc", ah, x, aw)


# ---------------------------------------------------------------- weight files

def save_weights(path, params, meta=None):
    """Write a JSON header followed by little-endian float32 data.

    Layout: 4-byte magic ``VNSW``, uint32 LE header length, UTF-8 JSON header
    ``{"meta": ..., "tensors": [{"name", "shape", "offset"}]}``, then the packed
    tensors in header order (offsets are element counts).
    """
    names = sorted(params)
    tensors, offset = [], 0
    for name in names:
        arr = np.asarray(params[name])
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
    header = json.dumps({"meta": meta or {}, "tensors": tensors}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for name in names:
            fh.write(np.ascontiguousarray(params[name], "<f4").tobytes())


def load_weights(path):
    """Inverse of :func:`save_weights`; returns ``(params, meta)`` as float64 arrays."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path}: not a weight file")
    (n,) = struct.unpack("<I", blob[4:8])
    header = json.loads(blob[8 : 8 + n])
    data = np.frombuffer(blob[8 + n :], "<f4")
    params = {}
    for t in header["tensors"]:
        size = int(np.prod(t["shape"], dtype=np.int64))
        chunk = data[t["offset"] : t["offset"] + size]
        if chunk.size != size:
            raise ValueError(f"{path}: truncated tensor {t['name']}")
        params[t["name"]] = chunk.astype(np.float64).reshape(t["shape"])
    return params, header["meta"]
