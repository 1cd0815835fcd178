"""Training losses with hand-derived gradients with respect to the logits.

Mask maps use the structure loss (boundary-weighted BCE plus weighted IoU),
edge maps use the smooth dice loss; the total sums both over the two levels.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .data import Mask, ShapeError
from .nn import sigmoid

SMOOTH = 1.0
POOL_SIZE = 31
WEIGHT_GAIN = 5.0


class ContractError(ValueError):
    """Decoder output lacks the levels the loss needs."""


@dataclass(frozen=True)
class LossValue:
    total: float
    stru_l1: float
    stru_l2: float
    dice_l1: float
    dice_l2: float

    def terms(self):
        return (self.stru_l1, self.stru_l2, self.dice_l1, self.dice_l2)


def _bits(m):
    return m.bits if isinstance(m, Mask) else np.asarray(m, bool)


def _inputs(logits, gt):
    z = np.asarray(getattr(logits, "values", logits), np.float64)
    g = _bits(gt).astype(np.float64)
    if z.shape != g.shape:
        raise ShapeError(f"logits {z.shape} vs target {g.shape}")
    return z, g


def edge_gt_from_mask(mask) -> Mask:
    """3x3 morphological gradient: dilation minus erosion (outside counts as background)."""
    m = _bits(mask)
    se = np.ones((3, 3), bool)
    dil = ndimage.binary_dilation(m, se)
    ero = ndimage.binary_erosion(m, se, border_value=0)
    return Mask(dil & ~ero)


def structure_weights(gt) -> np.ndarray:
    """1 + 5 |avgpool31(gt) - gt|, zero padding counted in the average."""
    g = _bits(gt).astype(np.float64)
    pooled = ndimage.uniform_filter(g, size=POOL_SIZE, mode="constant", cval=0.0)
    return 1.0 + WEIGHT_GAIN * np.abs(pooled - g)


def _softplus(z):
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def structure_loss(logits, gt, smooth=SMOOTH):
    """Weighted BCE + weighted IoU loss and its gradient with respect to ``logits``."""
    z, g = _inputs(logits, gt)
    w = structure_weights(g)
    p = sigmoid(z)
    sw = w.sum()
    bce = _softplus(z) - g * z
    wbce = float(np.sum(w * bce) / sw)
    inter = np.sum(w * p * g) + smooth
    union = np.sum(w * (p + g - p * g)) + smooth
    wiou = float(1.0 - inter / union)
    grad_bce = w * (p - g) / sw
    # d/dp of -(I/U): -(w g U - I w (1 - g)) / U^2
    dwiou_dp = -(w * g * union - inter * w * (1.0 - g)) / union**2
    grad = grad_bce + dwiou_dp * p * (1.0 - p)
    return wbce + wiou, grad


def dice_loss(logits, gt_edge, smooth=SMOOTH):
    """1 - (2 sum(p g) + s) / (sum(p) + sum(g) + s) and its gradient."""
    z, g = _inputs(logits, gt_edge)
    p = sigmoid(z)
    num = 2.0 * np.sum(p * g) + smooth
    den = np.sum(p) + np.sum(g) + smooth
    term = float(1.0 - num / den)
    dterm_dp = -(2.0 * g * den - num) / den**2
    return term, dterm_dp * p * (1.0 - p)


def total_loss(outputs, mk_gt, eg_gt, smooth=SMOOTH) -> LossValue:
    """Sum of structure losses on both mask levels and dice losses on both edge levels."""
    masks = getattr(outputs, "vns_mask", None)
    edges = getattr(outputs, "vns_edge", None)
    if masks is None or edges is None or any(k not in masks or k not in edges for k in (1, 2)):
        raise ContractError("total loss needs mask and edge predictions for levels 1 and 2")
    s1, _ = structure_loss(masks[1], mk_gt, smooth)
    s2, _ = structure_loss(masks[2], mk_gt, smooth)
    d1, _ = dice_loss(edges[1], eg_gt, smooth)
    d2, _ = dice_loss(edges[2], eg_gt, smooth)
    return LossValue(s1 + s2 + d1 + d2, s1, s2, d1, d2)


def finite_difference(fn, z, h=1e-4):
    """Central differences of scalar ``fn`` at every element of ``z``."""
    z = np.array(z, np.float64)
    grad = np.zeros_like(z)
    it = np.nditer(z, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = z[i]
        z[i] = orig + h
        up = fn(z)
        z[i] = orig - h
        down = fn(z)
        z[i] = orig
        grad[i] = (up - down) / (2 * h)
    return grad


def max_relative_error(analytic, numeric, floor=1e-8):
    a, n = np.asarray(analytic), np.asarray(numeric)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def gradient_check(loss_fn, n=100, size=8, seed=0, h=1e-4):
    """Worst relative error between analytic and central-difference gradients over
    ``n`` random logit/target instances."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        z = rng.normal(scale=2.0, size=(size, size))
        g = rng.random((size, size)) < rng.uniform(0.2, 0.8)
        _, grad = loss_fn(z, g)
        num = finite_difference(lambda v: loss_fn(v, g)[0], z, h)
        worst = max(worst, max_relative_error(grad, num))
    return worst
