"""Backend selection for the hot raster loops.

The compiled ``_ckernels`` extension is used when it imports; otherwise, or when
``VNSKIT_PURE_PYTHON`` is set to a non-empty value, the numpy versions in
``_pykernels`` are used. Both produce identical results.
"""
import os

import numpy as np

from . import _pykernels

try:
    if os.environ.get("VNSKIT_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from . import _ckernels
except ImportError:
    _ckernels = None

BACKEND = "python" if _ckernels is None else "cython"


class Kernels:
    """Thin adapter normalizing dtypes in front of one backend module."""

    def __init__(self, impl):
        self.impl = impl
        self.name = "cython" if impl is _ckernels else "python"

    def contour(self, mask):
        return self.impl.contour(np.ascontiguousarray(mask, np.uint8)).astype(bool)

    def boundary_band(self, mask, d):
        return self.impl.boundary_band(np.ascontiguousarray(mask, np.uint8), float(d)).astype(bool)

    def glcm_counts(self, q, region, levels, offsets):
        return self.impl.glcm_counts(
            np.ascontiguousarray(q, np.intp),
            np.ascontiguousarray(region, np.uint8),
            int(levels),
            np.ascontiguousarray(np.reshape(offsets, (-1, 2)), np.intp),
        )

    def pairwise_iou(self, a, b):
        return self.impl.pairwise_iou(np.ascontiguousarray(a, np.uint8), np.ascontiguousarray(b, np.uint8))


class _NumpyKernels(Kernels):
    """The numpy backend takes bool rasters as they are; no uint8 round trip."""

    def contour(self, mask):
        return self.impl.contour(np.asarray(mask, bool)).view(bool)

    def boundary_band(self, mask, d):
        return self.impl.boundary_band(np.asarray(mask, bool), d).view(bool)


python_kernels = _NumpyKernels(_pykernels)
compiled_kernels = None if _ckernels is None else Kernels(_ckernels)
active = compiled_kernels or python_kernels

contour = active.contour
boundary_band = active.boundary_band
glcm_counts = active.glcm_counts
pairwise_iou = active.pairwise_iou
