"""Oracle suites run by ``vnskit selftest``.

Each suite returns its worst observed error and the tolerance it must meet.
"""
from __future__ import annotations

import itertools
import math
import time

import numpy as np

from . import losses, metrics, nsfm


def _all_3x3():
    return np.array(list(itertools.product((0, 1), repeat=9)), bool).reshape(-1, 3, 3)


def _set_band(bits, d):
    pts = list(zip(*np.nonzero(bits)))
    h, w = bits.shape
    contour = [
        (y, x) for y, x in pts
        if any(not (0 <= y + dy < h and 0 <= x + dx < w) or not bits[y + dy, x + dx]
               for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)))
    ]
    return frozenset(p for p in pts if any(math.hypot(p[0] - c[0], p[1] - c[1]) <= d for c in contour))


def suite_metric_bruteforce():
    """iou and boundary_iou(d=1) over every pair of 3x3 masks vs set arithmetic."""
    masks = _all_3x3()
    sets = [frozenset(zip(*np.nonzero(m))) for m in masks]
    bands = [_set_band(m, 1) for m in masks]
    got_iou = metrics.pairwise_iou(masks, masks)
    got_biou = metrics.pairwise_boundary_iou(masks, masks, 1)
    worst = 0.0
    for i, (a, ba) in enumerate(zip(sets, bands)):
        for j, (b, bb) in enumerate(zip(sets, bands)):
            u = len(a | b)
            e_iou = 1.0 if u == 0 else len(a & b) / u
            ub = len(ba | bb)
            e_biou = 1.0 if ub == 0 else len(ba & bb) / ub
            worst = max(worst, abs(got_iou[i, j] - e_iou), abs(got_biou[i, j] - e_biou))
    return worst, 0.0


def suite_haar_round_trip(n=1000, dwt=None, seed=0):
    dwt = dwt or nsfm.haar_dwt2
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        x = rng.normal(size=(16, 16, 8))
        worst = max(worst, float(np.abs(nsfm.haar_idwt2(dwt(x)) - x).max()))
    return worst, 1e-6


def suite_haar_energy(n=1000, dwt=None, seed=1):
    dwt = dwt or nsfm.haar_dwt2
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        x = rng.normal(size=(16, 16, 8))
        b = dwt(x)
        e = sum(float(np.sum(v**2)) for v in (b.ll, b.lh, b.hl, b.hh))
        worst = max(worst, abs(e - float(np.sum(x**2))) / float(np.sum(x**2)))
    return worst, 1e-4


def suite_gradient_structure(n=100):
    return losses.gradient_check(losses.structure_loss, n=n, seed=10), 1e-4


def suite_gradient_dice(n=100):
    return losses.gradient_check(losses.dice_loss, n=n, seed=20), 1e-4


def suite_soft_metric_extremes():
    gt = np.zeros((12, 12), bool)
    gt[3:9, 2:8] = True
    g = gt.astype(float)
    errs = [
        abs(metrics.e_measure_mean(g, gt) - 1.0),
        abs(metrics.e_measure_mean(1.0 - g, gt)),
        abs(metrics.weighted_f_beta(g, gt) - 1.0),
        abs(metrics.weighted_f_beta(np.zeros_like(g), gt)),
    ]
    return max(errs), 1e-9


SUITES = {
    "metric_bruteforce": suite_metric_bruteforce,
    "haar_round_trip": suite_haar_round_trip,
    "haar_energy": suite_haar_energy,
    "gradient_structure": suite_gradient_structure,
    "gradient_dice": suite_gradient_dice,
    "soft_metric_extremes": suite_soft_metric_extremes,
}


def corrupted_dwt(x):
    """Haar analysis with one perturbed coefficient (fault-injection only)."""
    b = nsfm.haar_dwt2(x)
    ll = b.ll.copy()
    ll[0, 0, 0] += 1e-3
    return nsfm.WaveletBands(ll, b.lh, b.hl, b.hh)


def run(inject=None):
    results = []
    for name, fn in SUITES.items():
        t0 = time.perf_counter()
        if inject == "haar" and name.startswith("haar"):
            err, tol = fn(dwt=corrupted_dwt)
        else:
            err, tol = fn()
        passed = err <= tol if tol == 0.0 else err < tol
        results.append({
            "name": name,
            "passed": bool(passed),
            "max_error": err,
            "tolerance": tol,
            "seconds": round(time.perf_counter() - t0, 3),
        })
    return results
