"""Pipeline configuration: protocol constants and the TOML/flag config.

The defaults encode the evaluation protocol: depth-error bins at 5/10/20 m,
sign-matching intervals at 10/20 m, road-damage intervals at 2/4/6/8/10 m,
a 3 m deduplication radius, a 10 m annotation-match ceiling, and the 20 m
range under which an estimate counts as reliable.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ValidationError
from .geometry import MEAN_EARTH_RADIUS_M
from .rasters import DEFAULT_VALID_RANGE

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULT_DEPTH_BIN_EDGES = (5.0, 10.0, 20.0)
SIGN_INTERVAL_EDGES = (10.0, 20.0)
DAMAGE_INTERVAL_EDGES = (2.0, 4.0, 6.0, 8.0, 10.0)
DEFAULT_DEDUP_RADIUS_M = 3.0
DEFAULT_MATCH_MAX_DIST_M = 10.0
DEFAULT_BEARING_TOL_DEG = 5.0
RELIABLE_MAX_DISTANCE_M = 20.0


@dataclass
class PipelineConfig:
    """All knobs of the CLI pipeline; flat keys match the flag names."""

    meta: str | None = None
    depth_dir: str | None = None
    detections: str | None = None
    labels_dir: str | None = None
    cloud_dir: str | None = None
    truth_depth_dir: str | None = None
    refs: str | None = None
    records: str | None = None
    out: str | None = None
    depth_format: str = "raw"
    valid_range: tuple[float, float] = DEFAULT_VALID_RANGE
    earth_radius: float = MEAN_EARTH_RADIUS_M
    radius: float = DEFAULT_DEDUP_RADIUS_M
    max_dist: float = DEFAULT_MATCH_MAX_DIST_M
    bearing_tol: float = DEFAULT_BEARING_TOL_DEG
    bins: tuple[float, ...] = DEFAULT_DEPTH_BIN_EDGES
    workers: int = 1
    no_timestamp: bool = False

    def validate(self) -> None:
        for name in ("earth_radius", "radius", "max_dist", "bearing_tol"):
            value = getattr(self, name)
            if value <= 0:
                raise ValidationError(f"{name} must be positive, got {value}")
        lo, hi = self.valid_range
        if not 0 <= lo < hi:
            raise ValidationError(f"valid_range must satisfy 0 <= min < max, got {self.valid_range}")
        if list(self.bins) != sorted(set(self.bins)) or not self.bins:
            raise ValidationError(f"bins must be strictly increasing, got {self.bins}")
        if any(b <= 0 for b in self.bins):
            raise ValidationError(f"bin edges must be positive, got {self.bins}")
        if self.workers < 1:
            raise ValidationError(f"workers must be >= 1, got {self.workers}")
        if self.depth_format not in ("raw", "pfm"):
            raise ValidationError(f"depth_format must be 'raw' or 'pfm', got {self.depth_format}")


_CONFIG_FIELDS = {f.name: f for f in fields(PipelineConfig)}


def load_config(path: str | Path) -> PipelineConfig:
    """Read a flat TOML file whose keys mirror the CLI flag names."""
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"invalid TOML in {path}: {exc}") from exc
    return apply_overrides(PipelineConfig(), data, source=str(path))


def apply_overrides(cfg: PipelineConfig, overrides: dict, source: str = "flags") -> PipelineConfig:
    for key, value in overrides.items():
        name = key.replace("-", "_")
        if name not in _CONFIG_FIELDS:
            raise ValidationError(f"unknown configuration key {key!r} in {source}")
        if value is None:
            continue
        if name in ("valid_range", "bins"):
            value = _parse_float_tuple(value, name)
        setattr(cfg, name, value)
    return cfg


def _parse_float_tuple(value, name: str) -> tuple[float, ...]:
    if isinstance(value, str):
        parts = [p for p in value.replace(",", " ").split() if p]
    elif isinstance(value, (list, tuple)):
        parts = list(value)
    else:
        raise ValidationError(f"{name} must be a list or comma-separated string")
    try:
        return tuple(float(p) for p in parts)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"cannot parse {name}: {exc}") from exc
