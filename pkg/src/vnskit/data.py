"""Rasters, token containers, manifests and the seeded RNG shared by every module.

Rasters are row-major with the origin at the top-left and y growing downward.
Every container freezes its backing array, so instances can be shared freely.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from PIL import Image

DEFAULT_THRESHOLD = 128

ROLES = ("sam-output", "prompt", "vns-mask", "vns-edge")


class ShapeError(ValueError):
    """Raised when raster or tensor dimensions disagree."""


class ImageFormatError(ValueError):
    """Raised when an image file has the wrong pixel format."""


class ManifestError(ValueError):
    """Raised for malformed or empty manifests."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mask:
    """Binary foreground raster."""

    bits: np.ndarray

    def __post_init__(self):
        bits = _frozen(self.bits, bool)
        if bits.ndim != 2 or bits.shape[0] < 1 or bits.shape[1] < 1:
            raise ShapeError(f"mask must be a non-empty 2-D raster, got shape {bits.shape}")
        object.__setattr__(self, "bits", bits)

    @property
    def height(self):
        return self.bits.shape[0]

    @property
    def width(self):
        return self.bits.shape[1]

    @property
    def shape(self):
        return self.bits.shape

    @cached_property
    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def __eq__(self, other):
        return isinstance(other, Mask) and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash((self.shape, self.bits.tobytes()))

    @classmethod
    def from_coords(cls, width, height, coords):
        """Build a mask from ``(x, y)`` foreground coordinates."""
        bits = np.zeros((height, width), bool)
        for x, y in coords:
            bits[y, x] = True
        return cls(bits)


@dataclass(frozen=True, eq=False)
class SoftMap:
    """Real-valued raster. ``from_prediction`` clamps to [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values, np.float64)
        if values.ndim != 2 or values.size == 0:
            raise ShapeError(f"soft map must be a non-empty 2-D raster, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("soft map contains non-finite values")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_prediction(cls, values):
        return cls(np.clip(np.asarray(values, np.float64), 0.0, 1.0))

    @property
    def shape(self):
        return self.values.shape

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    def binarize(self, threshold=DEFAULT_THRESHOLD / 255.0) -> Mask:
        return Mask(self.values >= threshold)


@dataclass(frozen=True, eq=False)
class GrayImage:
    intensities: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.intensities)
        if a.ndim != 2 or a.size == 0:
            raise ShapeError(f"gray image must be a non-empty 2-D raster, got shape {a.shape}")
        if np.any((a < 0) | (a > 255)):
            raise ValueError("gray intensities must lie in 0..255")
        object.__setattr__(self, "intensities", _frozen(a, np.uint8))

    @property
    def shape(self):
        return self.intensities.shape


@dataclass(frozen=True, eq=False)
class ColorImage:
    rgb: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.rgb)
        if a.ndim != 3 or a.shape[2] != 3 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ShapeError(f"color image must be HxWx3, got shape {a.shape}")
        if np.any((a < 0) | (a > 255)):
            raise ValueError("rgb values must lie in 0..255")
        object.__setattr__(self, "rgb", _frozen(a, np.uint8))

    @property
    def shape(self):
        return self.rgb.shape[:2]

    def to_gray(self) -> GrayImage:
        """ITU-R 601 luma, rounded to 8 bits."""
        rgb = self.rgb.astype(np.float64)
        luma = rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114
        return GrayImage(np.clip(np.rint(luma), 0, 255))


@dataclass(frozen=True, eq=False)
class TokenSet:
    """Ordered token vectors of shared dimension with a role label per token."""

    tokens: np.ndarray
    labels: tuple

    def __post_init__(self):
        tokens = _frozen(self.tokens, np.float64)
        if tokens.ndim != 2:
            raise ShapeError(f"tokens must be (N, D), got shape {tokens.shape}")
        labels = tuple(self.labels)
        if len(labels) != tokens.shape[0]:
            raise ShapeError(f"{len(labels)} labels for {tokens.shape[0]} tokens")
        bad = [r for r in labels if r not in ROLES]
        if bad:
            raise ValueError(f"unknown token roles {bad}")
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self):
        return self.tokens.shape[1]

    def __len__(self):
        return self.tokens.shape[0]

    def index(self, role):
        idx = [i for i, r in enumerate(self.labels) if r == role]
        if len(idx) != 1:
            raise ValueError(f"expected exactly one {role!r} token, found {len(idx)}")
        return idx[0]

    def replace(self, i, vector) -> "TokenSet":
        tokens = self.tokens.copy()
        tokens[i] = vector
        return TokenSet(tokens, self.labels)

    def concat(self, other: "TokenSet") -> "TokenSet":
        if other.dim != self.dim:
            raise ShapeError(f"token dims differ: {self.dim} vs {other.dim}")
        return TokenSet(np.concatenate([self.tokens, other.tokens]), self.labels + other.labels)


# ---------------------------------------------------------------- rng

def make_rng(seed, *keys) -> np.random.Generator:
    """Philox counter-based generator keyed by ``seed`` and optional sub-keys.

    Equal arguments give an identical stream on every platform; sub-keys derive
    independent per-record streams without any shared state.
    """
    seq = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *(int(k) for k in keys)])
    return np.random.Generator(np.random.Philox(seq))


# ---------------------------------------------------------------- image io

def _open(path):
    try:
        return Image.open(path)
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc


def read_gray(path) -> GrayImage:
    with _open(path) as im:
        if im.mode != "L":
            raise ImageFormatError(f"{path}: expected 8-bit grayscale, got mode {im.mode}")
        return GrayImage(np.asarray(im))


def read_color(path) -> ColorImage:
    with _open(path) as im:
        if im.mode not in ("RGB", "L", "RGBA", "P"):
            raise ImageFormatError(f"{path}: unsupported image mode {im.mode}")
        return ColorImage(np.asarray(im.convert("RGB")))


def load_mask(path, threshold=DEFAULT_THRESHOLD) -> Mask:
    """Read an 8-bit grayscale PNG/PGM; foreground iff intensity >= threshold."""
    if not 0 <= threshold <= 255:
        raise ValueError("threshold must lie in 0..255")
    return Mask(read_gray(path).intensities >= threshold)


def load_softmap(path) -> SoftMap:
    return SoftMap(read_gray(path).intensities / 255.0)


def save_gray(path, values):
    """Write a uint8-compatible 2-D array; format from the suffix (.png/.pgm)."""
    a = np.asarray(values)
    Image.fromarray(np.clip(a, 0, 255).astype(np.uint8), mode="L").save(path)


def save_mask(path, mask: Mask):
    save_gray(path, mask.bits.astype(np.uint8) * 255)


def save_softmap(path, soft: SoftMap):
    save_gray(path, np.rint(soft.values * 255.0))


def save_color(path, img: ColorImage):
    Image.fromarray(img.rgb, mode="RGB").save(path)


# ---------------------------------------------------------------- manifest

@dataclass(frozen=True)
class Instance:
    mask: Path
    score: float


@dataclass(frozen=True)
class Record:
    image: Path
    gt_mask: Path
    pred: Path | None = None
    instances: tuple = field(default_factory=tuple)


def _record_from_json(obj, base, line):
    if not isinstance(obj, dict):
        raise ManifestError("record must be a JSON object", line)
    for key in ("image", "gt_mask"):
        if not isinstance(obj.get(key), str):
            raise ManifestError(f"missing or non-string field {key!r}", line)
    unknown = set(obj) - {"image", "gt_mask", "pred", "instances"}
    if unknown:
        raise ManifestError(f"unknown fields {sorted(unknown)}", line)
    pred = obj.get("pred")
    if pred is not None and not isinstance(pred, str):
        raise ManifestError("field 'pred' must be a string", line)
    instances = []
    for inst in obj.get("instances") or []:
        if not isinstance(inst, dict) or not isinstance(inst.get("mask"), str):
            raise ManifestError("instance entries need a string 'mask'", line)
        score = inst.get("score")
        if isinstance(score, bool) or not isinstance(score, (int, float)) or not np.isfinite(score):
            raise ManifestError("instance 'score' must be a finite number", line)
        instances.append(Instance(base / inst["mask"], float(score)))
    rec = Record(
        image=base / obj["image"],
        gt_mask=base / obj["gt_mask"],
        pred=None if pred is None else base / pred,
        instances=tuple(instances),
    )
    return rec


def parse_manifest(path) -> list[Record]:
    """Parse a JSON Lines manifest; relative paths resolve against its directory.

    Blank lines are skipped but still counted, so error line numbers match an editor.
    """
    path = Path(path)
    base = path.parent
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"invalid JSON ({exc.msg})", lineno) from exc
            records.append(_record_from_json(obj, base, lineno))
    if not records:
        raise ManifestError(f"manifest {path} has no records")
    return records
