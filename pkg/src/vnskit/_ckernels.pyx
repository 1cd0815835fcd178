# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Signatures and results match ``_pykernels`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


def contour(const cnp.uint8_t[:, :] mask):
    cdef Py_ssize_t h = mask.shape[0], w = mask.shape[1], y, x
    out = np.zeros((h, w), np.uint8)
    cdef cnp.uint8_t[:, :] o = out
    for y in range(h):
        for x in range(w):
            if not mask[y, x]:
                continue
            if (y == 0 or x == 0 or y == h - 1 or x == w - 1
                    or not mask[y - 1, x] or not mask[y + 1, x]
                    or not mask[y, x - 1] or not mask[y, x + 1]):
                o[y, x] = 1
    return out


def boundary_band(const cnp.uint8_t[:, :] mask, double d):
    """Foreground pixels within Euclidean distance ``d`` of the mask contour."""
    cdef Py_ssize_t h = mask.shape[0], w = mask.shape[1]
    cdef Py_ssize_t y, x, yy, xx, y0, y1, x0, x1
    cdef Py_ssize_t r = <Py_ssize_t>floor(d)
    cdef double d2 = d * d
    cdef bint hit
    cdef cnp.uint8_t[:, :] c = contour(mask)
    out = np.zeros((h, w), np.uint8)
    cdef cnp.uint8_t[:, :] o = out
    for y in range(h):
        for x in range(w):
            if not mask[y, x]:
                continue
            if c[y, x]:
                o[y, x] = 1
                continue
            y0 = y - r if y > r else 0
            y1 = y + r + 1 if y + r + 1 < h else h
            x0 = x - r if x > r else 0
            x1 = x + r + 1 if x + r + 1 < w else w
            hit = False
            for yy in range(y0, y1):
                for xx in range(x0, x1):
                    if c[yy, xx] and (yy - y) * (yy - y) + (xx - x) * (xx - x) <= d2:
                        hit = True
                        break
                if hit:
                    break
            if hit:
                o[y, x] = 1
    return out


def glcm_counts(const cnp.intp_t[:, :] q, const cnp.uint8_t[:, :] region,
                Py_ssize_t levels, const cnp.intp_t[:, :] offsets):
    """Symmetric co-occurrence counts over pairs with both ends inside ``region``."""
    cdef Py_ssize_t h = q.shape[0], w = q.shape[1], k, y, x, dy, dx, yy, xx, a, b
    out = np.zeros((levels, levels), np.int64)
    cdef cnp.int64_t[:, :] g = out
    for k in range(offsets.shape[0]):
        dy = offsets[k, 0]
        dx = offsets[k, 1]
        for y in range(h):
            yy = y + dy
            if yy < 0 or yy >= h:
                continue
            for x in range(w):
                xx = x + dx
                if xx < 0 or xx >= w or not region[y, x] or not region[yy, xx]:
                    continue
                a = q[y, x]
                b = q[yy, xx]
                g[a, b] += 1
                g[b, a] += 1
    return out


cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil


def _pack(rows):
    # 64 pixels per word; zero padding adds no set bits
    packed = np.packbits(np.asarray(rows, np.uint8), axis=1)
    pad = (-packed.shape[1]) % 8
    if pad:
        packed = np.pad(packed, ((0, 0), (0, pad)))
    return np.ascontiguousarray(packed).view(np.uint64)


def pairwise_iou(const cnp.uint8_t[:, :] a, const cnp.uint8_t[:, :] b):
    """IoU between every row of ``a`` and every row of ``b`` (flattened masks)."""
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], i, j, k, words
    cdef long inter, union
    out = np.empty((n, m), np.float64)
    cdef double[:, :] o = out
    cdef const cnp.uint64_t[:, :] pa = _pack(a)
    cdef const cnp.uint64_t[:, :] pb = _pack(b)
    words = pa.shape[1]
    ca = np.zeros(n, np.int64)
    cb = np.zeros(m, np.int64)
    cdef cnp.int64_t[:] na = ca
    cdef cnp.int64_t[:] nb = cb
    for i in range(n):
        for k in range(words):
            na[i] += __builtin_popcountll(pa[i, k])
    for j in range(m):
        for k in range(words):
            nb[j] += __builtin_popcountll(pb[j, k])
    with nogil:
        for i in range(n):
            for j in range(m):
                inter = 0
                for k in range(words):
                    inter += __builtin_popcountll(pa[i, k] & pb[j, k])
                union = na[i] + nb[j] - inter
                o[i, j] = 1.0 if union == 0 else <double>inter / <double>union
    return out
