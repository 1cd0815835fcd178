"""Slow, literal re-implementations used as independent oracles by the tests.

Nothing here imports the package's numeric code.
"""
import itertools
import math

import numpy as np


def pixel_set(bits):
    bits = np.asarray(bits, bool)
    return {(y, x) for y, x in zip(*np.nonzero(bits))}


def iou_sets(a, b):
    union = a | b
    if not union:
        return 1.0
    return len(a & b) / len(union)


def contour_set(bits):
    bits = np.asarray(bits, bool)
    h, w = bits.shape
    out = set()
    for y, x in pixel_set(bits):
        for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            yy, xx = y + dy, x + dx
            if not (0 <= yy < h and 0 <= xx < w) or not bits[yy, xx]:
                out.add((y, x))
                break
    return out


def band_set(bits, d):
    """Foreground pixels within Euclidean distance d of any contour pixel, by brute force."""
    fg = pixel_set(bits)
    cont = contour_set(bits)
    return {
        p for p in fg
        if any(math.hypot(p[0] - c[0], p[1] - c[1]) <= d for c in cont)
    }


def e_measure_loop(pred, gt, thresholds):
    """Per-threshold enhanced alignment, written pixel by pixel."""
    pred = np.asarray(pred, float)
    gt = np.asarray(gt, bool)
    eps = np.finfo(float).eps
    h, w = gt.shape
    n = h * w
    g = [[1.0 if gt[y, x] else 0.0 for x in range(w)] for y in range(h)]
    mean_g = sum(map(sum, g)) / n
    scores = []
    for t in thresholds:
        b = [[1.0 if pred[y, x] >= t else 0.0 for x in range(w)] for y in range(h)]
        mean_b = sum(map(sum, b)) / n
        total = 0.0
        for y in range(h):
            for x in range(w):
                if mean_g == 0:
                    e = 1.0 - b[y][x]
                elif mean_g == 1:
                    e = b[y][x]
                else:
                    pg = g[y][x] - mean_g
                    pb = b[y][x] - mean_b
                    xi = 2 * pg * pb / (pg * pg + pb * pb + eps)
                    e = (1 + xi) ** 2 / 4
                total += e
        scores.append(total / n)
    return scores


def weighted_f_literal(pred, gt, beta2=1.0, nearest=None):
    """Step-by-step weighted F-measure.

    ``nearest`` optionally maps each pixel to the (y, x) of the foreground pixel
    whose error it inherits; by default the brute-force nearest foreground pixel
    with the lowest row-major index wins ties.
    """
    pred = np.asarray(pred, float)
    gt = np.asarray(gt, bool)
    eps = np.finfo(float).eps
    h, w = gt.shape
    fg = sorted(pixel_set(gt))
    err = np.abs(gt.astype(float) - pred)
    dist = np.zeros((h, w))
    err_t = err.copy()
    for y, x in itertools.product(range(h), range(w)):
        if gt[y, x]:
            continue
        best = min(fg, key=lambda p: ((p[0] - y) ** 2 + (p[1] - x) ** 2, p))
        dist[y, x] = math.hypot(best[0] - y, best[1] - x)
        src = best if nearest is None else nearest[y][x]
        err_t[y, x] = err[src]
    kern = np.zeros((7, 7))
    for i, j in itertools.product(range(7), range(7)):
        kern[i, j] = math.exp(-((i - 3) ** 2 + (j - 3) ** 2) / (2 * 25.0))
    kern /= kern.sum()
    err_a = np.zeros((h, w))
    for y, x in itertools.product(range(h), range(w)):
        acc = 0.0
        for i, j in itertools.product(range(7), range(7)):
            yy = min(max(y + i - 3, 0), h - 1)
            xx = min(max(x + j - 3, 0), w - 1)
            acc += kern[i, j] * err_t[yy, xx]
        err_a[y, x] = acc
    err_w = np.zeros((h, w))
    for y, x in itertools.product(range(h), range(w)):
        if gt[y, x]:
            err_w[y, x] = min(err[y, x], err_a[y, x])
        else:
            err_w[y, x] = err[y, x] * (2 - math.exp(math.log(0.5) / 5 * dist[y, x]))
    n_fg = len(fg)
    tp = n_fg - sum(err_w[p] for p in fg)
    fp = sum(err_w[y, x] for y, x in itertools.product(range(h), range(w)) if not gt[y, x])
    recall = 1 - sum(err_w[p] for p in fg) / n_fg
    precision = tp / (eps + tp + fp)
    return (1 + beta2) * recall * precision / (eps + recall + beta2 * precision)


def conv2d_loops(x, w, b, pad):
    """Direct HWC convolution; ``w`` is (kh, kw, cin, cout)."""
    h, wd, cin = x.shape
    kh, kw, _, cout = w.shape
    xp = np.zeros((h + 2 * pad, wd + 2 * pad, cin))
    xp[pad : pad + h, pad : pad + wd] = x
    oh, ow = h + 2 * pad - kh + 1, wd + 2 * pad - kw + 1
    out = np.zeros((oh, ow, cout))
    for y in range(oh):
        for xx in range(ow):
            for o in range(cout):
                out[y, xx, o] = b[o] + sum(
                    xp[y + i, xx + j, c] * w[i, j, c, o]
                    for i in range(kh) for j in range(kw) for c in range(cin)
                )
    return out


def srgb_to_lab_chain(r, g, b):
    """sRGB -> linear -> XYZ (D65) -> CIELAB for one pixel, scalar arithmetic only."""
    def lin(c):
        c /= 255.0
        return c / 12.92 if c <= 0.04045 else ((c + 0.055) / 1.055) ** 2.4

    rl, gl, bl = lin(float(r)), lin(float(g)), lin(float(b))
    X = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl
    Y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl
    Z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl

    def f(t):
        return t ** (1 / 3) if t > (6 / 29) ** 3 else t / (3 * (6 / 29) ** 2) + 4 / 29

    fx, fy, fz = f(X / 0.95047), f(Y / 1.0), f(Z / 1.08883)
    return 116 * fy - 16, 500 * (fx - fy), 200 * (fy - fz)


def glcm_contrast_pairs(gray, region, levels, offsets):
    """Enumerate co-occurring pairs explicitly and average (i - j)^2."""
    gray = np.asarray(gray)
    region = np.asarray(region, bool)
    h, w = gray.shape
    pairs = []
    for dy, dx in offsets:
        for y, x in itertools.product(range(h), range(w)):
            yy, xx = y + dy, x + dx
            if 0 <= yy < h and 0 <= xx < w and region[y, x] and region[yy, xx]:
                a = int(gray[y, x]) * levels // 256
                b = int(gray[yy, xx]) * levels // 256
                pairs += [(a, b), (b, a)]
    if not pairs:
        return 0.0
    return sum((a - b) ** 2 for a, b in pairs) / len(pairs) / (levels - 1) ** 2


def sobel_loops(gray):
    """3x3 Sobel magnitude with edge-replicated borders."""
    g = np.asarray(gray, float)
    h, w = g.shape
    kx = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]]
    ky = [[-1, -2, -1], [0, 0, 0], [1, 2, 1]]
    out = np.zeros((h, w))
    for y, x in itertools.product(range(h), range(w)):
        gx = gy = 0.0
        for i, j in itertools.product(range(3), range(3)):
            yy = min(max(y + i - 1, 0), h - 1)
            xx = min(max(x + j - 1, 0), w - 1)
            gx += kx[i][j] * g[yy, xx]
            gy += ky[i][j] * g[yy, xx]
        out[y, x] = math.sqrt(gx * gx + gy * gy)
    return out
