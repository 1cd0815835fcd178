"""Segmentation metrics: IoU, boundary IoU, mean E-measure, weighted F-measure, mask AP."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import kernels
from .data import Mask, ShapeError, SoftMap

EPS = 1e-8
# E-measure and weighted-F keep machine epsilon, as in their reference code.
# A 1e-8 guard there would pull perfect predictions measurably below 1.
TINY = np.finfo(np.float64).eps

BIOU_FRACTION = 0.02
AP_THRESHOLDS = tuple(np.round(np.linspace(0.5, 0.95, 10), 2))
RECALL_GRID = np.linspace(0.0, 1.0, 101)
E_THRESHOLDS = (np.arange(256) + 0.5) / 256.0


class UndefinedMetricError(ValueError):
    """The metric has no value for this input (e.g. an empty ground truth)."""


def _bits(m):
    return m.bits if isinstance(m, Mask) else np.asarray(m, bool)


def _values(m):
    if isinstance(m, SoftMap):
        return m.values
    if isinstance(m, Mask):
        return m.bits.astype(np.float64)
    return np.asarray(m, np.float64)


def _check(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def iou(pred, gt) -> float:
    """|pred & gt| / |pred | gt|, with two empty masks scoring 1."""
    p, g = _bits(pred), _bits(gt)
    _check(p, g)
    union = np.count_nonzero(p | g)
    if union == 0:
        return 1.0
    return np.count_nonzero(p & g) / union


def default_band_width(shape, fraction=BIOU_FRACTION) -> int:
    diag = math.hypot(*shape)
    return max(1, int(math.floor(fraction * diag + 0.5)))


def boundary_band(mask, d) -> np.ndarray:
    """Foreground pixels within distance ``d`` of the mask contour (the ``X_d & X`` band).

    A foreground pixel is on the contour when any 4-neighbour is background or
    lies outside the raster.
    """
    return kernels.boundary_band(_bits(mask), d)


def boundary_iou(pred, gt, d=None) -> float:
    p, g = _bits(pred), _bits(gt)
    _check(p, g)
    if d is None:
        d = default_band_width(p.shape)
    if d < 1:
        raise ValueError("band width d must be >= 1")
    return iou(kernels.boundary_band(p, d), kernels.boundary_band(g, d))


def pairwise_iou(preds, gts) -> np.ndarray:
    """IoU matrix between two lists of equally sized masks."""
    a = np.array([_bits(m).ravel() for m in preds], bool)
    b = np.array([_bits(m).ravel() for m in gts], bool)
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    if a.shape[1] != b.shape[1]:
        raise ShapeError("masks must share image dimensions")
    return kernels.pairwise_iou(a, b)


def pairwise_boundary_iou(preds, gts, d) -> np.ndarray:
    """Boundary IoU matrix; bands are computed once per mask."""
    bp = [kernels.boundary_band(_bits(m), d) for m in preds]
    bg = [kernels.boundary_band(_bits(m), d) for m in gts]
    return pairwise_iou(bp, bg)


def _enhanced(g, b, mu_g, mu_b):
    fg = g - mu_g
    fb = b - mu_b
    align = 2.0 * fg * fb / (fg * fg + fb * fb + TINY)
    return (1.0 + align) ** 2 / 4.0


def e_measure_curve(pred, gt, thresholds=E_THRESHOLDS) -> np.ndarray:
    """Enhanced-alignment score of ``pred >= t`` against ``gt`` for each threshold ``t``.

    Only the four (gt, binarized) value pairs occur in the enhanced map, so each
    threshold reduces to pixel counts per pair.
    """
    p, g = _values(pred), _bits(gt)
    _check(p, g)
    n = g.size
    n_fg = int(np.count_nonzero(g))
    thresholds = np.asarray(thresholds, np.float64)
    in_fg = np.sort(p[g])
    in_bg = np.sort(p[~g])
    n11 = in_fg.size - np.searchsorted(in_fg, thresholds, side="left")
    n10 = in_bg.size - np.searchsorted(in_bg, thresholds, side="left")
    mu_b = (n11 + n10) / n
    if n_fg == 0:
        return 1.0 - mu_b
    if n_fg == n:
        return mu_b
    mu_g = n_fg / n
    n01 = n_fg - n11
    n00 = (n - n_fg) - n10
    total = (
        n11 * _enhanced(1.0, 1.0, mu_g, mu_b)
        + n10 * _enhanced(0.0, 1.0, mu_g, mu_b)
        + n01 * _enhanced(1.0, 0.0, mu_g, mu_b)
        + n00 * _enhanced(0.0, 0.0, mu_g, mu_b)
    )
    return total / n


def e_measure_mean(pred, gt) -> float:
    """Mean enhanced-alignment measure over 256 uniform thresholds."""
    return float(np.mean(e_measure_curve(pred, gt)))


def _gaussian_kernel(size=7, sigma=5.0):
    r = (size - 1) / 2.0
    y, x = np.mgrid[-r : r + 1, -r : r + 1]
    k = np.exp(-(x * x + y * y) / (2.0 * sigma * sigma))
    return k / k.sum()


def weighted_f_beta(pred, gt, beta2=1.0) -> float:
    """Weighted F-measure with distance-dependent error weighting."""
    p, g = _values(pred), _bits(gt)
    _check(p, g)
    if not g.any():
        raise UndefinedMetricError("weighted F-measure needs a non-empty ground truth")
    err = np.abs(g.astype(np.float64) - p)
    dist, (iy, ix) = ndimage.distance_transform_edt(~g, return_indices=True)
    # background pixels inherit the error of their nearest foreground pixel
    err_t = err[iy, ix]
    # edge replication: a total miss then scores exactly 0 even next to the border
    err_a = ndimage.correlate(err_t, _gaussian_kernel(), mode="nearest")
    min_err = np.where(g & (err_a < err), err_a, err)
    weight = np.where(g, 1.0, 2.0 - np.exp(np.log(0.5) / 5.0 * dist))
    err_w = min_err * weight
    tp_w = np.count_nonzero(g) - err_w[g].sum()
    fp_w = err_w[~g].sum()
    recall = 1.0 - err_w[g].mean()
    precision = tp_w / (TINY + tp_w + fp_w)
    return float((1.0 + beta2) * recall * precision / (TINY + recall + beta2 * precision))


def _ap_at(ious, order, n_gt, thr):
    matched = np.zeros(n_gt, bool)
    tp = np.zeros(len(order))
    for rank, i in enumerate(order):
        best, best_j = -1.0, -1
        for j in range(n_gt):
            if not matched[j] and ious[i, j] > best:
                best, best_j = ious[i, j], j
        if best_j >= 0 and best >= thr:
            matched[best_j] = True
            tp[rank] = 1.0
    ctp = np.cumsum(tp)
    recall = ctp / n_gt
    precision = ctp / np.arange(1, len(order) + 1)
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_GRID, side="left")
    q = np.where(idx < len(precision), precision[np.minimum(idx, len(precision) - 1)], 0.0)
    return float(q.mean())


def instance_ap(preds, gts, thresholds=AP_THRESHOLDS):
    """Mask AP with greedy score-ordered matching and 101-point interpolation.

    ``preds`` is a list of ``(mask, score)`` pairs. Returns ``(ap, ap50, ap75)``
    where ``ap`` averages over ``thresholds``. With no ground truths the result
    is 1.0 if there are also no predictions and 0.0 otherwise.
    """
    preds = list(preds)
    scores = np.array([float(s) for _, s in preds])
    if not np.all(np.isfinite(scores)):
        raise ValueError("prediction scores must be finite")
    if not gts:
        v = 1.0 if not preds else 0.0
        return v, v, v
    if not preds:
        return 0.0, 0.0, 0.0
    ious = pairwise_iou([m for m, _ in preds], gts)
    order = np.argsort(-scores, kind="stable")
    per = {round(float(t), 2): _ap_at(ious, order, len(gts), float(t)) for t in thresholds}
    ap = float(np.mean(list(per.values())))
    ap50 = per.get(0.5, _ap_at(ious, order, len(gts), 0.5))
    ap75 = per.get(0.75, _ap_at(ious, order, len(gts), 0.75))
    return ap, ap50, ap75


# ---------------------------------------------------------------- reports

METRIC_KEYS = ("iou", "biou", "e_phi", "f_beta_w")
AP_KEYS = ("ap", "ap50", "ap75")


@dataclass
class MetricReport:
    records: list = field(default_factory=list)

    def add(self, entry: dict):
        self.records.append(entry)

    def mean(self) -> dict:
        out = {}
        for key in METRIC_KEYS + AP_KEYS:
            vals = [r[key] for r in self.records if r.get(key) is not None]
            if vals:
                # fixed record order keeps the reduction reproducible
                out[key] = math.fsum(vals) / len(vals)
        return out

    def to_dict(self) -> dict:
        return {"records": self.records, "mean": self.mean()}


def evaluate_pair(pred: SoftMap, gt: Mask, threshold=128 / 255.0, biou_d=None) -> dict:
    """All four per-image metrics for one soft prediction."""
    binary = pred.binarize(threshold)
    return {
        "iou": iou(binary, gt),
        "biou": boundary_iou(binary, gt, biou_d),
        "e_phi": e_measure_mean(pred, gt),
        "f_beta_w": weighted_f_beta(pred, gt),
    }
