"""Threshold configuration shared by measurement and classification.

Loaded from a flat JSON or TOML document whose keys are the field names of
:class:`Thresholds`; unknown keys are rejected.
"""
from __future__ import annotations

import json
import math
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional, Union

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import InputError


class InvalidThresholds(InputError):
    pass


@dataclass(frozen=True)
class Thresholds:
    # bulge score cut points t1 < t2 < t3 (score scale 0..1000, convex = 1000)
    bulge_thresholds: tuple[float, float, float] = (150.0, 300.0, 400.0)
    # apex translation along the ED long axis, % of ED axis length
    apex_motion_percent: float = 8.0
    # outward residual segment motion, % of ED axis length
    hypo_threshold_percent: float = 1.0
    n_disks: int = 20
    basal_vertical_mode: str = "axis"  # "axis" | "image_y"
    lv_shape_min_ratio: float = 1.5
    basal_motion_min_percent: float = 5.0
    sector_min_ratio: float = 0.99
    contrast_min: float = 5.0  # wall/cavity ratio
    contrast_min_difference: float = 50.0  # wall - cavity, 8-bit intensity
    area_change_min_percent: float = 35.0
    # EF bins: reduced < 40 <= mildly reduced < 50 <= normal <= 70 < hyperdynamic
    ef_bins: tuple[float, float, float] = (40.0, 50.0, 70.0)
    contrast_mode: str = "ratio"  # "ratio" | "difference"
    contrast_frame: str = "ed"  # "ed" | "es" | "mean"
    contrast_band_px: Optional[float] = None  # None: 4 px at 112 px, scaled with frame size
    sector_intensity_floor: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "bulge_thresholds", tuple(float(t) for t in self.bulge_thresholds))
        object.__setattr__(self, "ef_bins", tuple(float(t) for t in self.ef_bins))
        check_ascending(self.bulge_thresholds, "bulge_thresholds")
        check_ascending(self.ef_bins, "ef_bins")
        if self.n_disks < 4:
            raise InvalidThresholds(f"n_disks must be >= 4, got {self.n_disks}")
        if self.basal_vertical_mode not in ("axis", "image_y"):
            raise InvalidThresholds(f"basal_vertical_mode must be 'axis' or 'image_y'")
        if self.contrast_mode not in ("ratio", "difference"):
            raise InvalidThresholds("contrast_mode must be 'ratio' or 'difference'")
        if self.contrast_frame not in ("ed", "es", "mean"):
            raise InvalidThresholds("contrast_frame must be 'ed', 'es' or 'mean'")
        if self.contrast_band_px is not None and not self.contrast_band_px > 0:
            raise InvalidThresholds("contrast_band_px must be positive")

    @classmethod
    def from_dict(cls, doc: dict) -> "Thresholds":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise InvalidThresholds(f"unknown threshold keys: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise InvalidThresholds(str(exc)) from exc

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["bulge_thresholds"] = list(self.bulge_thresholds)
        doc["ef_bins"] = list(self.ef_bins)
        return doc


def check_ascending(values, name: str) -> None:
    vals = [float(v) for v in values]
    if len(vals) != 3 or not all(math.isfinite(v) for v in vals):
        raise InvalidThresholds(f"{name} must be three finite numbers, got {values!r}")
    if not (vals[0] < vals[1] < vals[2]):
        raise InvalidThresholds(f"{name} must be strictly ascending, got {values!r}")


def load_thresholds(path: Union[str, Path, None]) -> Thresholds:
    if path is None:
        return Thresholds()
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix.lower() == ".toml":
        doc = tomllib.loads(raw.decode("utf-8"))
    else:
        doc = json.loads(raw)
    if not isinstance(doc, dict):
        raise InvalidThresholds(f"{path}: expected a table/object at top level")
    return Thresholds.from_dict(doc)
