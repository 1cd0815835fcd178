"""Non-salient feature mining: Haar sub-bands of multi-level encoder features,
attention-gated aggregation, and synthesis of the mask and edge feature maps.

The high-frequency (HH) path produces the edge feature, the low-frequency (LL)
path the mask feature.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .data import ShapeError


@dataclass(frozen=True)
class WaveletBands:
    ll: np.ndarray
    lh: np.ndarray
    hl: np.ndarray
    hh: np.ndarray

    def __post_init__(self):
        shapes = {b.shape for b in (self.ll, self.lh, self.hl, self.hh)}
        if len(shapes) != 1:
            raise ShapeError(f"sub-band shapes disagree: {sorted(shapes)}")


def haar_dwt2(f) -> WaveletBands:
    """Orthonormal one-level 2-D Haar analysis over non-overlapping 2x2 blocks."""
    f = np.asarray(f, np.float64)
    if f.ndim == 2:
        f = f[..., None]
    h, w = f.shape[:2]
    if h % 2 or w % 2:
        raise ShapeError(f"Haar analysis needs even height and width, got {h}x{w}")
    a = f[0::2, 0::2]
    b = f[0::2, 1::2]
    c = f[1::2, 0::2]
    d = f[1::2, 1::2]
    return WaveletBands(
        ll=(a + b + c + d) / 2,
        lh=(a - b + c - d) / 2,
        hl=(a + b - c - d) / 2,
        hh=(a - b - c + d) / 2,
    )


def haar_idwt2(bands: WaveletBands) -> np.ndarray:
    ll, lh, hl, hh = bands.ll, bands.lh, bands.hl, bands.hh
    h, w = ll.shape[:2]
    out = np.empty((2 * h, 2 * w) + ll.shape[2:])
    out[0::2, 0::2] = (ll + lh + hl + hh) / 2
    out[0::2, 1::2] = (ll - lh + hl - hh) / 2
    out[1::2, 0::2] = (ll + lh - hl - hh) / 2
    out[1::2, 1::2] = (ll - lh - hl + hh) / 2
    return out


@dataclass(frozen=True)
class NsfmConfig:
    enc_channels: int = 32
    agg_channels: int = 32
    out_channels: int = 32
    levels: int = 4
    reduction: int = 8
    spatial_kernel: int = 7

    @property
    def hidden(self):
        return max(1, self.agg_channels // self.reduction)


FULL_NSFM = NsfmConfig(enc_channels=256, agg_channels=256, out_channels=32)

PATHS = ("hh", "ll")


def init_nsfm(cfg: NsfmConfig, rng, params=None, prefix="nsfm"):
    pb = nn.ParamBuilder(rng, params)
    for path in PATHS:
        p = f"{prefix}.{path}"
        pb.conv(f"{p}.reduce", 1, 1, cfg.levels * cfg.enc_channels, cfg.agg_channels)
        pb.linear(f"{p}.ca.0", cfg.agg_channels, cfg.hidden)
        pb.linear(f"{p}.ca.1", cfg.hidden, cfg.agg_channels)
        pb.conv(f"{p}.sa", cfg.spatial_kernel, cfg.spatial_kernel, 2, 1)
        pb.conv(f"{p}.fuse", 1, 1, cfg.enc_channels + cfg.agg_channels, cfg.agg_channels)
        pb.conv_t(f"{p}.up1", cfg.agg_channels, cfg.out_channels)
        pb.conv_t(f"{p}.up2", cfg.out_channels, cfg.out_channels)
    return pb.params


def expected_param_count(cfg: NsfmConfig) -> int:
    c, a, o, k = cfg.enc_channels, cfg.agg_channels, cfg.out_channels, cfg.spatial_kernel
    per_path = (
        (cfg.levels * c * a + a)
        + (a * cfg.hidden + cfg.hidden) + (cfg.hidden * a + a)
        + (k * k * 2 + 1)
        + ((c + a) * a + a)
        + (a * 4 * o + o) + (o * 4 * o + o)
    )
    return len(PATHS) * per_path


def channel_gate(x, p):
    """sigmoid(MLP(avg-pool) + MLP(max-pool)) per channel."""
    avg = x.mean(axis=(0, 1))
    mx = x.max(axis=(0, 1))
    return nn.sigmoid(nn.mlp(avg, p, 2) + nn.mlp(mx, p, 2))


def spatial_gate(x, p):
    """sigmoid(conv over the channel-wise mean and max maps), HxWx1."""
    stacked = np.stack([x.mean(axis=2), x.max(axis=2)], axis=-1)
    return nn.sigmoid(nn.conv2d(stacked, p))


def attention(x, p):
    x = x * channel_gate(x, nn.sub(p, "ca"))
    return x * spatial_gate(x, nn.sub(p, "sa"))


def aggregate_band(components, params, path="hh", prefix="nsfm"):
    """Concatenate one sub-band across levels, reduce channels, then gate."""
    shapes = {c.shape for c in components}
    if len(shapes) != 1:
        raise ShapeError(f"band components disagree in shape: {sorted(shapes)}")
    p = nn.sub(params, f"{prefix}.{path}")
    x = nn.conv2d(np.concatenate(components, axis=-1), nn.sub(p, "reduce"))
    return attention(x, p)


def _synthesize(agg, f1, p):
    up = nn.upsample_bilinear(agg, 2)
    fused = nn.conv2d(np.concatenate([f1, up], axis=-1), nn.sub(p, "fuse")) + up
    x = nn.gelu(nn.conv_transpose2x2(fused, nn.sub(p, "up1")))
    return nn.gelu(nn.conv_transpose2x2(x, nn.sub(p, "up2")))


def nsfm_forward(features, params, cfg: NsfmConfig, prefix="nsfm"):
    """Return ``(f_mk, f_eg)`` at 4x the encoder grid from the level features."""
    features = [np.asarray(f, np.float64) for f in features]
    if len(features) != cfg.levels:
        raise ShapeError(f"expected {cfg.levels} encoder levels, got {len(features)}")
    shapes = {f.shape for f in features}
    if len(shapes) != 1:
        raise ShapeError(f"encoder levels disagree in shape: {sorted(shapes)}")
    (shape,) = shapes
    if len(shape) != 3 or shape[2] != cfg.enc_channels:
        raise ShapeError(f"expected HxWx{cfg.enc_channels} features, got {shape}")
    bands = [haar_dwt2(f) for f in features]
    out = {}
    for path in PATHS:
        agg = aggregate_band([getattr(b, path) for b in bands], params, path, prefix)
        out[path] = _synthesize(agg, features[0], nn.sub(params, f"{prefix}.{path}"))
    return out["ll"], out["hh"]
