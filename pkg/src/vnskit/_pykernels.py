"""Pure numpy implementations of the compiled kernels in ``_ckernels.pyx``."""
import numpy as np
from scipy import ndimage


# below this many (foreground x contour) pairs direct distances beat the EDT call
_BRUTE_PAIRS = 1 << 14


def contour(mask):
    m = np.asarray(mask, bool)
    h, w = m.shape
    padded = np.zeros((h + 2, w + 2), bool)
    padded[1:-1, 1:-1] = m
    interior = padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    return (m & ~interior).view(np.uint8)


def boundary_band(mask, d):
    m = np.asarray(mask, bool)
    c = contour(m).view(bool)
    cy, cx = np.nonzero(c)
    if cy.size == 0:
        return np.zeros(m.shape, np.uint8)
    fy, fx = np.nonzero(m)
    if fy.size * cy.size <= _BRUTE_PAIRS:
        d2 = (fy[:, None] - cy) ** 2 + (fx[:, None] - cx) ** 2
        out = np.zeros(m.shape, np.uint8)
        out[fy, fx] = (d2 <= d * d).any(axis=1)
        return out
    dist = ndimage.distance_transform_edt(~c)
    return (m & (dist <= d)).view(np.uint8)


def glcm_counts(q, region, levels, offsets):
    q = np.asarray(q, np.intp)
    region = np.asarray(region, bool)
    h, w = q.shape
    out = np.zeros((levels, levels), np.int64)
    for dy, dx in np.asarray(offsets, np.intp):
        ys, ye = max(0, -dy), min(h, h - dy)
        xs, xe = max(0, -dx), min(w, w - dx)
        if ys >= ye or xs >= xe:
            continue
        src = (slice(ys, ye), slice(xs, xe))
        dst = (slice(ys + dy, ye + dy), slice(xs + dx, xe + dx))
        valid = region[src] & region[dst]
        a = q[src][valid]
        b = q[dst][valid]
        flat = np.bincount(a * levels + b, minlength=levels * levels).reshape(levels, levels)
        out += flat + flat.T
    return out


def pairwise_iou(a, b):
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    inter = a @ b.T
    union = a.sum(1)[:, None] + b.sum(1)[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(union > 0, inter / np.where(union > 0, union, 1), 1.0)
    return out
