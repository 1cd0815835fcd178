import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from vnskit import metrics
from vnskit.data import Mask, ShapeError, SoftMap
from vnskit.metrics import (
    UndefinedMetricError,
    boundary_iou,
    e_measure_curve,
    e_measure_mean,
    instance_ap,
    iou,
    weighted_f_beta,
)

masks_8 = arrays(bool, (8, 8))


def square(h, w, y0, x0, size):
    m = np.zeros((h, w), bool)
    m[y0 : y0 + size, x0 : x0 + size] = True
    return m


def test_iou_examples():
    a = square(6, 6, 1, 1, 3)
    assert iou(a, a) == 1.0
    assert iou(square(6, 6, 0, 0, 2), square(6, 6, 3, 3, 2)) == 0.0
    assert iou(np.zeros((3, 3)), np.zeros((3, 3))) == 1.0


def test_iou_hand_grid():
    pred = Mask.from_coords(4, 4, [(1, 1), (2, 1), (1, 2), (2, 2)])
    gt = Mask.from_coords(4, 4, [(0, 0), (1, 0), (0, 1), (1, 1)])
    expected = oracles.iou_sets(oracles.pixel_set(pred.bits), oracles.pixel_set(gt.bits))
    assert expected == pytest.approx(1 / 7)
    assert iou(pred, gt) == expected


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        iou(np.zeros((3, 3)), np.zeros((3, 4)))
    with pytest.raises(ShapeError):
        boundary_iou(np.zeros((3, 3)), np.zeros((4, 3)), 1)
    with pytest.raises(ShapeError):
        e_measure_mean(np.zeros((3, 3)), np.zeros((4, 3)))
    with pytest.raises(ShapeError):
        weighted_f_beta(np.zeros((3, 3)), np.ones((4, 3)))


def test_boundary_iou_shifted_square_matches_brute_force():
    pred = square(8, 8, 2, 2, 4)
    gt = square(8, 8, 2, 3, 4)
    expected = oracles.iou_sets(oracles.band_set(pred, 1), oracles.band_set(gt, 1))
    assert boundary_iou(pred, gt, 1) == expected
    assert boundary_iou(pred, pred, 1) == 1.0


def test_boundary_iou_saturates_to_iou():
    rng = np.random.default_rng(3)
    for _ in range(20):
        a = rng.random((9, 7)) < 0.5
        b = rng.random((9, 7)) < 0.5
        assert boundary_iou(a, b, np.hypot(9, 7)) == iou(a, b)


def test_default_band_width():
    assert metrics.default_band_width((8, 8)) == 1
    assert metrics.default_band_width((300, 400)) == 10
    assert metrics.default_band_width((1000, 1000)) == 28


@settings(max_examples=60, deadline=None)
@given(masks_8, masks_8, st.sampled_from([1, 1.5, 2, 3]))
def test_boundary_iou_oracle_and_symmetry(a, b, d):
    expected = oracles.iou_sets(oracles.band_set(a, d), oracles.band_set(b, d))
    assert boundary_iou(a, b, d) == expected
    assert boundary_iou(b, a, d) == expected


@settings(max_examples=60, deadline=None)
@given(masks_8, masks_8)
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0


def test_pairwise_matches_scalar():
    rng = np.random.default_rng(5)
    ms = [rng.random((6, 5)) < p for p in (0.0, 0.2, 0.5, 0.9)]
    mat = metrics.pairwise_iou(ms, ms)
    for i, j in itertools.product(range(4), range(4)):
        assert mat[i, j] == iou(ms[i], ms[j])
    bmat = metrics.pairwise_boundary_iou(ms, ms, 1)
    for i, j in itertools.product(range(4), range(4)):
        assert bmat[i, j] == boundary_iou(ms[i], ms[j], 1)


# ---------------------------------------------------------------- E-measure

def half_gt(h=8, w=8):
    g = np.zeros((h, w), bool)
    g[:, : w // 2] = True
    return g


def test_e_measure_identical_binary_is_one():
    g = half_gt()
    curve = e_measure_curve(g.astype(float), g)
    assert np.allclose(curve, 1.0, atol=1e-12)
    assert e_measure_mean(SoftMap(g.astype(float)), Mask(g)) == pytest.approx(1.0, abs=1e-9)


def test_e_measure_complement_is_zero():
    g = half_gt()
    assert e_measure_mean((~g).astype(float), g) == pytest.approx(0.0, abs=1e-9)


def test_e_measure_degenerate_gt():
    pred = np.random.default_rng(0).random((5, 5))
    zeros = np.zeros((5, 5), bool)
    ones = np.ones((5, 5), bool)
    for t, v in zip(metrics.E_THRESHOLDS, e_measure_curve(pred, zeros)):
        assert v == pytest.approx(1 - np.mean(pred >= t))
    for t, v in zip(metrics.E_THRESHOLDS, e_measure_curve(pred, ones)):
        assert v == pytest.approx(np.mean(pred >= t))


@pytest.mark.parametrize("seed", range(4))
def test_e_measure_matches_threshold_loop(seed):
    rng = np.random.default_rng(seed)
    pred = rng.random((8, 8))
    gt = rng.random((8, 8)) < 0.4
    thresholds = metrics.E_THRESHOLDS[::17]
    expected = oracles.e_measure_loop(pred, gt, thresholds)
    np.testing.assert_allclose(e_measure_curve(pred, gt, thresholds), expected, rtol=0, atol=1e-12)


def test_e_measure_mean_full_sweep_against_loop():
    rng = np.random.default_rng(11)
    pred = np.round(rng.random((6, 6)) * 255) / 255
    gt = rng.random((6, 6)) < 0.5
    expected = np.mean(oracles.e_measure_loop(pred, gt, metrics.E_THRESHOLDS))
    assert e_measure_mean(pred, gt) == pytest.approx(expected, abs=1e-12)


# ---------------------------------------------------------------- weighted F

def interior_gt():
    g = np.zeros((12, 12), bool)
    g[4:8, 3:9] = True
    return g


def test_weighted_f_identity_and_total_miss():
    g = interior_gt()
    assert weighted_f_beta(g.astype(float), g) == pytest.approx(1.0, abs=1e-9)
    assert weighted_f_beta(np.zeros_like(g, float), g) == pytest.approx(0.0, abs=1e-9)


def test_weighted_f_empty_gt_raises():
    with pytest.raises(UndefinedMetricError):
        weighted_f_beta(np.zeros((4, 4)), np.zeros((4, 4), bool))


def test_weighted_f_tie_free_literal_oracle():
    # constant prediction inside gt makes the nearest-pixel tie-break irrelevant
    rng = np.random.default_rng(7)
    gt = np.zeros((8, 8), bool)
    gt[2:6, 1:5] = True
    gt[6, 6] = True
    pred = rng.random((8, 8))
    pred[gt] = 0.7
    assert weighted_f_beta(pred, gt) == pytest.approx(oracles.weighted_f_literal(pred, gt), abs=1e-12)
    assert weighted_f_beta(pred, gt, beta2=0.3) == pytest.approx(
        oracles.weighted_f_literal(pred, gt, beta2=0.3), abs=1e-12
    )


@pytest.mark.parametrize("seed", range(3))
def test_weighted_f_random_literal_oracle(seed):
    from scipy import ndimage

    rng = np.random.default_rng(100 + seed)
    gt = rng.random((8, 8)) < 0.35
    gt[3, 3] = True
    pred = rng.random((8, 8))
    dist, (iy, ix) = ndimage.distance_transform_edt(~gt, return_indices=True)
    # the assignment used by the implementation must be a true nearest pixel
    for y, x in itertools.product(range(8), range(8)):
        brute = min(np.hypot(py - y, px - x) for py, px in zip(*np.nonzero(gt)))
        assert np.hypot(iy[y, x] - y, ix[y, x] - x) == pytest.approx(brute)
    nearest = [[(iy[y, x], ix[y, x]) for x in range(8)] for y in range(8)]
    expected = oracles.weighted_f_literal(pred, gt, nearest=nearest)
    assert weighted_f_beta(pred, gt) == pytest.approx(expected, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (6, 6), elements=st.floats(0, 1)), arrays(bool, (6, 6)))
def test_soft_metrics_bounded(pred, gt):
    assert 0.0 <= e_measure_mean(pred, gt) <= 1.0 + 1e-12
    if gt.any():
        assert 0.0 <= weighted_f_beta(pred, gt) <= 1.0 + 1e-12


# ---------------------------------------------------------------- AP

def test_ap_perfect_match():
    g = square(10, 10, 2, 2, 4)
    assert instance_ap([(g, 0.3)], [g]) == (1.0, 1.0, 1.0)


def test_ap_no_predictions():
    g = square(10, 10, 2, 2, 4)
    assert instance_ap([], [g]) == (0.0, 0.0, 0.0)


def test_ap_no_ground_truth():
    g = square(10, 10, 2, 2, 4)
    assert instance_ap([], []) == (1.0, 1.0, 1.0)
    assert instance_ap([(g, 0.5)], []) == (0.0, 0.0, 0.0)


def test_ap_one_hit_one_background():
    g1 = square(10, 10, 0, 0, 3)
    g2 = square(10, 10, 6, 6, 3)
    bg = square(10, 10, 0, 6, 2)
    _, ap50, _ = instance_ap([(g1, 0.9), (bg, 0.8)], [g1, g2])
    # precision 1 up to recall 0.5, nothing beyond: 51 of the 101 recall points
    assert ap50 == pytest.approx(51 / 101)


def test_ap_greedy_order_and_thresholds():
    g = square(10, 10, 2, 2, 4)
    near = square(10, 10, 2, 3, 4)  # IoU 12/20 = 0.6
    ap, ap50, ap75 = instance_ap([(near, 0.9)], [g])
    assert ap50 == 1.0 and ap75 == 0.0
    assert ap == pytest.approx(0.3)  # matched at 0.50, 0.55 and 0.60
    # a lower-scored exact duplicate cannot steal the gt once it is matched
    ap, ap50, _ = instance_ap([(near, 0.9), (g, 0.1)], [g])
    assert ap50 == 1.0


def test_report_mean_is_arithmetic():
    rep = metrics.MetricReport()
    rep.add({"iou": 0.5, "biou": 0.25, "e_phi": 1.0, "f_beta_w": 0.0})
    rep.add({"iou": 1.0, "biou": 0.75, "e_phi": 0.5, "f_beta_w": 1.0})
    assert rep.mean() == {"iou": 0.75, "biou": 0.5, "e_phi": 0.75, "f_beta_w": 0.5}
