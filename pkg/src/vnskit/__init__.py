"""Reference toolkit for segmentation of visually non-salient objects."""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
