"""Run configuration: defaults, flat ``key=value`` files, and flag overrides."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from .decoder import ConfigurationError, DecoderConfig
from .nsfm import NsfmConfig


@dataclass(frozen=True)
class Config:
    seed: int = 0
    jobs: int = 1
    # thresholds
    binarize: int = 128
    vns_threshold: float = 0.7
    biou_fraction: float = 0.02
    # prompts
    noise_scale: float = 0.1
    n_points: int = 10
    # vns-score
    glcm_levels: int = 16
    weight_cfb: float = 0.5
    weight_boundary: float = 0.5
    sobel_normalization: str = "max"
    # demo-forward shapes (desk scale)
    grid: int = 16
    dim: int = 32
    heads: int = 4
    mlp_dim: int = 64
    enc_channels: int = 32
    agg_channels: int = 32
    feat_channels: int = 16
    fuse_hidden: int = 16
    image_size: int = 256

    def to_dict(self):
        return asdict(self)

    def decoder(self) -> DecoderConfig:
        return DecoderConfig(self.dim, self.heads, self.mlp_dim, self.feat_channels, self.fuse_hidden)

    def nsfm(self) -> NsfmConfig:
        return NsfmConfig(self.enc_channels, self.agg_channels, self.feat_channels)

    def validate(self):
        if not 0 <= self.binarize <= 255:
            raise ConfigurationError("binarize must lie in 0..255")
        if self.jobs < 1 or self.n_points < 1 or self.glcm_levels < 2:
            raise ConfigurationError("jobs and n_points must be >= 1, glcm_levels >= 2")
        if self.noise_scale < 0:
            raise ConfigurationError("noise_scale must be >= 0")
        if self.sobel_normalization not in ("max", "literal"):
            raise ConfigurationError("sobel_normalization must be 'max' or 'literal'")
        if self.grid < 2 or self.grid % 2:
            raise ConfigurationError("grid must be an even number >= 2")
        self.decoder()
        return self


FIELD_TYPES = {f.name: f.type for f in fields(Config)}
_CASTS = {"int": int, "float": float, "str": str}


def cast(key, raw):
    if key not in FIELD_TYPES:
        raise ConfigurationError(f"unknown config key {key!r}")
    try:
        return _CASTS[FIELD_TYPES[key]](raw)
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key}: {raw!r}") from exc


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = cast(key, value)
    return values


def resolve(path=None, overrides=None) -> Config:
    """Defaults, then the config file, then explicit overrides (flags win)."""
    cfg = Config()
    if path is not None:
        cfg = replace(cfg, **read_config_file(path))
    if overrides:
        cfg = replace(cfg, **{k: cast(k, v) for k, v in overrides.items() if v is not None})
    return cfg.validate()
