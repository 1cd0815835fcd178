"""Prompt generation for interactive evaluation and training: boxes, points, coarse masks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .data import Mask, SoftMap
from .metrics import iou

NOISE_SCALE = 0.1
N_POINTS = 10
NOISE_CAP = 20.0
COARSE_IOU_BAND = (0.3, 0.95)
COARSE_ATTEMPTS = 20
COARSE_FACTOR = 8
COARSE_MAX_RADIUS = 3


class EmptyMaskError(ValueError):
    """A prompt was requested from a mask with no foreground."""


class DegradationError(RuntimeError):
    """No coarse mask landed in the IoU band within the attempt budget."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned box; ``x2``/``y2`` are exclusive."""

    x1: int
    y1: int
    x2: int
    y2: int

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"degenerate box {self}")

    @property
    def width(self):
        return self.x2 - self.x1

    @property
    def height(self):
        return self.y2 - self.y1

    def as_list(self):
        return [self.x1, self.y1, self.x2, self.y2]


@dataclass(frozen=True)
class PointSet:
    points: tuple
    labels: tuple

    def as_list(self):
        return [list(p) for p in self.points]


def _bits(mask):
    return mask.bits if isinstance(mask, Mask) else np.asarray(mask, bool)


def gt_box(mask) -> Box:
    """Tightest box around the foreground."""
    bits = _bits(mask)
    ys, xs = np.nonzero(bits)
    if ys.size == 0:
        raise EmptyMaskError("cannot box an empty mask")
    return Box(int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)


def _order_clamp(a, b, limit):
    lo, hi = sorted((min(max(a, 0), limit), min(max(b, 0), limit)))
    if lo == hi:
        if hi < limit:
            hi += 1
        else:
            lo -= 1
    return lo, hi


def noisy_box(box: Box, scale, img_w, img_h, rng) -> Box:
    """Jitter each coordinate by N(0, scale * side), capped at 20 px per coordinate.

    Four normals are always drawn, so the stream position does not depend on
    ``scale``.
    """
    if scale < 0:
        raise ValueError("noise scale must be >= 0")
    sides = np.array([box.width, box.height, box.width, box.height], np.float64)
    noise = rng.normal(size=4) * scale * sides
    noise = np.clip(noise, -NOISE_CAP, NOISE_CAP)
    x1, y1, x2, y2 = np.rint(np.array(box.as_list(), np.float64) + noise).astype(int)
    x1, x2 = _order_clamp(int(x1), int(x2), img_w)
    y1, y2 = _order_clamp(int(y1), int(y2), img_h)
    return Box(x1, y1, x2, y2)


def sample_points(mask, n, rng) -> PointSet:
    """``n`` uniform foreground points; with replacement only when the mask is too small."""
    if n < 1:
        raise ValueError("n must be >= 1")
    ys, xs = np.nonzero(_bits(mask))
    if ys.size == 0:
        raise EmptyMaskError("cannot sample points from an empty mask")
    idx = rng.choice(ys.size, size=n, replace=ys.size < n)
    points = tuple((int(xs[i]), int(ys[i])) for i in idx)
    return PointSet(points, (1,) * n)


def _downsample_upsample(bits, factor):
    h, w = bits.shape
    sh, sw = max(1, -(-h // factor)), max(1, -(-w // factor))
    padded = np.zeros((sh * factor, sw * factor))
    padded[:h, :w] = bits
    small = padded.reshape(sh, factor, sw, factor).mean(axis=(1, 3))
    # bilinear back to full resolution, sampling at pixel centres
    ys = (np.arange(h) + 0.5) / factor - 0.5
    xs = (np.arange(w) + 0.5) / factor - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return ndimage.map_coordinates(small, [yy, xx], order=1, mode="nearest")


def _disk(r):
    y, x = np.mgrid[-r : r + 1, -r : r + 1]
    return x * x + y * y <= r * r


def radius_unit(shape):
    """Pixel length of one radius step; 1 up to 64 px images, growing with size."""
    return max(1, min(shape) // 64)


def degrade(mask, rng, factor=COARSE_FACTOR, max_radius=COARSE_MAX_RADIUS) -> np.ndarray:
    """One draw of the coarse-mask pipeline, as a float map in [0, 1]."""
    bits = _bits(mask)
    soft = _downsample_upsample(bits, factor)
    op = rng.integers(2)
    r = int(rng.integers(0, max_radius + 1)) * radius_unit(bits.shape)
    if r > 0:
        fp = _disk(r)
        if op == 0:
            soft = ndimage.grey_dilation(soft, footprint=fp, mode="constant", cval=0.0)
        else:
            soft = ndimage.grey_erosion(soft, footprint=fp, mode="constant", cval=0.0)
    return np.clip(soft, 0.0, 1.0)


def coarse_mask(mask, rng, band=COARSE_IOU_BAND, attempts=COARSE_ATTEMPTS) -> SoftMap:
    """Degrade ``mask`` until the binarized result has IoU with it inside ``band``."""
    bits = _bits(mask)
    if not bits.any():
        raise EmptyMaskError("cannot degrade an empty mask")
    lo, hi = band
    for _ in range(attempts):
        soft = degrade(bits, rng)
        if lo <= iou(soft >= 0.5, bits) <= hi:
            return SoftMap(soft)
    raise DegradationError(f"no coarse mask with IoU in [{lo}, {hi}] after {attempts} attempts")
