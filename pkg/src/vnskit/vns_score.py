"""Visual non-saliency scoring of an image/mask pair, plus dataset intensity statistics.

The score combines foreground/background contrast (LAB colour means and GLCM
texture contrast) with Sobel boundary clarity; higher scores mean the object is
harder to see.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from . import kernels
from .data import ColorImage, GrayImage, Mask, ShapeError
from .metrics import UndefinedMetricError

NON_SALIENT_THRESHOLD = 0.7
GLCM_LEVELS = 16
GLCM_OFFSETS = ((0, 1), (1, 0))
SOBEL_MAX = 255.0 * 4.0 * math.sqrt(2.0)

# sRGB primaries to XYZ under D65
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_WHITE_D65 = np.array([0.95047, 1.0, 1.08883])


class NoPairsWarning(RuntimeWarning):
    """A GLCM region had no co-occurring pixel pairs; contrast reported as 0."""


@dataclass(frozen=True)
class VnsBreakdown:
    color_contrast: float
    texture_contrast: float
    c_fb: float
    boundary_clarity: float
    score: float

    @property
    def partition(self):
        return partition(self.score)

    def to_dict(self):
        return asdict(self)


def partition(score, threshold=NON_SALIENT_THRESHOLD):
    return "non-salient" if score >= threshold else "salient"


def rgb_to_lab(img) -> np.ndarray:
    """sRGB (8-bit, D65) to CIE L*a*b*, returned as an HxWx3 float array."""
    rgb = img.rgb if isinstance(img, ColorImage) else np.asarray(img)
    c = rgb.astype(np.float64) / 255.0
    lin = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    xyz = lin @ _RGB_TO_XYZ.T / _WHITE_D65
    delta = 6.0 / 29.0
    f = np.where(xyz > delta**3, np.cbrt(xyz), xyz / (3 * delta**2) + 4.0 / 29.0)
    L = np.clip(116.0 * f[..., 1] - 16.0, 0.0, 100.0)
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return np.stack([L, a, b], axis=-1)


def _gray(g):
    return g.intensities if isinstance(g, GrayImage) else np.asarray(g, np.uint8)


def _mask(m):
    return m.bits if isinstance(m, Mask) else np.asarray(m, bool)


def quantize(gray, levels):
    return (_gray(gray).astype(np.intp) * levels) // 256


def glcm(gray, region, levels=GLCM_LEVELS, offsets=GLCM_OFFSETS) -> np.ndarray:
    """Symmetric co-occurrence counts restricted to pixel pairs inside ``region``."""
    if levels < 2:
        raise ValueError("levels must be >= 2")
    g, r = _gray(gray), _mask(region)
    if g.shape != r.shape:
        raise ShapeError(f"image {g.shape} and region {r.shape} differ")
    return kernels.glcm_counts(quantize(g, levels), r, levels, offsets)


def glcm_contrast(gray, region, levels=GLCM_LEVELS, offsets=GLCM_OFFSETS) -> float:
    """Normalized GLCM contrast in [0, 1]."""
    r = _mask(region)
    if not r.any():
        raise UndefinedMetricError("GLCM contrast of an empty region")
    counts = glcm(gray, r, levels, offsets)
    total = counts.sum()
    if total == 0:
        warnings.warn("region has no co-occurring pixel pairs", NoPairsWarning, stacklevel=2)
        return 0.0
    i, j = np.indices(counts.shape)
    contrast = float(np.sum(counts * (i - j) ** 2) / total)
    return contrast / (levels - 1) ** 2


def foreground_background_contrast(img, gray, mask, levels=GLCM_LEVELS, offsets=GLCM_OFFSETS):
    """Return ``(c_fb, color_term, texture_term)``."""
    m = _mask(mask)
    if not m.any() or m.all():
        raise UndefinedMetricError("foreground and background must both be non-empty")
    lab = rgb_to_lab(img)
    if lab.shape[:2] != m.shape:
        raise ShapeError(f"image {lab.shape[:2]} and mask {m.shape} differ")
    # centring on one pixel keeps identical colours exactly cancelling
    ref = lab[m][0]
    diff = (lab[m] - ref).mean(axis=0) - (lab[~m] - ref).mean(axis=0)
    color = min(1.0, float(np.linalg.norm(diff)) / 100.0)
    with warnings.catch_warnings():
        # a one-pixel region legitimately has no pairs
        warnings.simplefilter("ignore", NoPairsWarning)
        texture = abs(glcm_contrast(gray, m, levels, offsets) - glcm_contrast(gray, ~m, levels, offsets))
    return (color + texture) / 2.0, color, texture


def sobel_magnitude(gray) -> np.ndarray:
    g = _gray(gray).astype(np.float64)
    gx = ndimage.sobel(g, axis=1, mode="nearest")
    gy = ndimage.sobel(g, axis=0, mode="nearest")
    return np.hypot(gx, gy)


def object_contour(mask) -> np.ndarray:
    """Foreground pixels with a background 4-neighbour inside the image.

    Unlike the metric contour, the image border is not treated as background:
    an object cut by the frame has no visible boundary there.
    """
    m = _mask(mask)
    bg = np.pad(~m, 1, constant_values=False)
    touches = bg[:-2, 1:-1] | bg[2:, 1:-1] | bg[1:-1, :-2] | bg[1:-1, 2:]
    return m & touches


def boundary_clarity(gray, mask, normalization="max") -> float:
    """Mean Sobel magnitude on the object contour.

    ``normalization="max"`` divides by the largest attainable magnitude and
    clamps to [0, 1]; ``"literal"`` divides by 255 without clamping.
    """
    g, m = _gray(gray), _mask(mask)
    if g.shape != m.shape:
        raise ShapeError(f"image {g.shape} and mask {m.shape} differ")
    contour = object_contour(m)
    if not contour.any():
        raise UndefinedMetricError("mask has no object boundary")
    mean = float(sobel_magnitude(g)[contour].mean())
    if normalization == "literal":
        return mean / 255.0
    if normalization != "max":
        raise ValueError(f"unknown normalization {normalization!r}")
    return min(1.0, mean / SOBEL_MAX)


def combine(c_fb, b, weights=(0.5, 0.5)) -> float:
    return 1.0 - (weights[0] * c_fb + weights[1] * b)


def vns_score(img, mask, gray=None, *, weights=(0.5, 0.5), levels=GLCM_LEVELS,
              offsets=GLCM_OFFSETS, normalization="max") -> VnsBreakdown:
    if not isinstance(img, ColorImage):
        img = ColorImage(img)
    if gray is None:
        gray = img.to_gray()
    c_fb, color, texture = foreground_background_contrast(img, gray, mask, levels, offsets)
    b = boundary_clarity(gray, mask, normalization)
    return VnsBreakdown(color, texture, c_fb, b, combine(c_fb, b, weights))


def dataset_stats(images) -> tuple[float, float]:
    """Population mean and standard deviation over every pixel of every image (two passes)."""
    arrays = [_gray(im).astype(np.float64).ravel() for im in images]
    if not arrays:
        raise ValueError("dataset_stats needs at least one image")
    n = sum(a.size for a in arrays)
    mean = math.fsum(float(a.sum()) for a in arrays) / n
    var = math.fsum(float(np.sum((a - mean) ** 2)) for a in arrays) / n
    return mean, math.sqrt(var)
