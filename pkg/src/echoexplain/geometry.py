"""Contour-only measurements: long axis, disk volumes, EF and the geometric attributes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import polygon
from .config import Thresholds, check_ascending
from .contour_io import CardiacCycle, ContourFrame, order_ed_es
from .errors import (
    DegenerateAxis,
    InvalidSector,
    NonPositiveEDV,
    NonPositiveWidth,
    PointCountMismatch,
)

N_SEGMENTS = 7
BULGE_CLASSES = ("undetected_convexity", "prominent", "mild", "none")
MOTION_LABELS = ("normal", "hypokinetic", "dyskinetic")
# depths and motion components below this fraction of the axis length are float noise
_REL_EPS = 1e-9


@dataclass(frozen=True)
class LongAxis:
    apex: tuple[float, float]
    base_mid: tuple[float, float]
    length: float
    direction: tuple[float, float]

    @property
    def normal(self) -> np.ndarray:
        """Unit vector perpendicular to the axis."""
        dx, dy = self.direction
        return np.array([-dy, dx])

    def point_at(self, t: float) -> np.ndarray:
        """Point at fraction ``t`` of the way from apex to base."""
        return np.asarray(self.apex) + t * self.length * np.asarray(self.direction)


def long_axis(frame: ContourFrame) -> LongAxis:
    apex = np.asarray(frame.apex, dtype=float)
    base = np.asarray(frame.base_mid, dtype=float)
    v = base - apex
    length = float(math.hypot(*v))
    if length < 1.0:
        raise DegenerateAxis(f"long-axis length {length:.3g} px < 1 px")
    d = v / length
    return LongAxis(tuple(apex), tuple(base), length, (float(d[0]), float(d[1])))


def disk_widths(frame: ContourFrame, n_disks: int = 20) -> np.ndarray:
    """Contour chord widths (px) perpendicular to the long axis at each disk centre."""
    if n_disks < 4:
        raise ValueError(f"n_disks must be >= 4, got {n_disks}")
    axis = long_axis(frame)
    xy = frame.xy
    widths = np.array([
        polygon.chord_width(xy, axis.point_at((i + 0.5) / n_disks), axis.normal)
        for i in range(n_disks)
    ])
    bad = np.flatnonzero(widths <= 0)
    if len(bad):
        raise NonPositiveWidth(f"contour does not span disk stations {bad.tolist()}")
    return widths


def disk_volume(frame: ContourFrame, n_disks: int = 20) -> float:
    """Single-plane method-of-disks volume, in ``spacing**3`` units (px^3 by default)."""
    widths = disk_widths(frame, n_disks)
    h = long_axis(frame).length / n_disks
    return float(np.sum(math.pi / 4.0 * widths**2) * h) * frame.spacing**3


@dataclass(frozen=True)
class VolumePair:
    edv: float
    esv: float

    def __post_init__(self):
        if not self.edv > 0:
            raise NonPositiveEDV(f"EDV must be positive, got {self.edv}")
        if not self.esv >= 0:
            raise ValueError(f"ESV must be non-negative, got {self.esv}")


def ejection_fraction(vols: VolumePair) -> float:
    """EF in percent."""
    if not vols.edv > 0:
        raise NonPositiveEDV(f"EDV must be positive, got {vols.edv}")
    return 100.0 * (vols.edv - vols.esv) / vols.edv


def convex_hull(points) -> np.ndarray:
    return polygon.convex_hull(points)


@dataclass(frozen=True)
class BulgeResult:
    score: float
    max_defect_depth: float
    defect_location: Optional[tuple[int, int]]
    category: str


def classify_bulge(score: float, thresholds=(150.0, 300.0, 400.0)) -> str:
    check_ascending(thresholds, "bulge thresholds")
    t1, t2, t3 = thresholds
    if score < t1:
        return "undetected_convexity"
    if score < t2:
        return "prominent"
    if score < t3:
        return "mild"
    return "none"


def septal_indices(frame: ContourFrame) -> np.ndarray:
    """Indices of the septal wall: canonical start (basal_left) through the apex vertex."""
    return np.arange(frame.apex_index + 1)


def bulge_score(frame: ContourFrame, thresholds=(150.0, 300.0, 400.0)) -> BulgeResult:
    """Septal convexity defect scored as ``1000 * (1 - depth / axis length)``.

    Larger scores mean a flatter septum; a convex contour scores exactly 1000.
    """
    check_ascending(thresholds, "bulge thresholds")
    axis = long_axis(frame)
    xy = frame.xy
    hull = polygon.convex_hull(xy)
    idx = septal_indices(frame)
    depth = polygon.segment_distances(xy[idx], hull)
    depth[depth <= _REL_EPS * axis.length] = 0.0

    max_depth = float(depth.max())
    location = None
    if max_depth > 0:
        k = int(np.argmax(depth))
        lo, hi = k, k
        while lo > 0 and depth[lo - 1] > 0:
            lo -= 1
        while hi + 1 < len(depth) and depth[hi + 1] > 0:
            hi += 1
        location = (int(idx[lo]), int(idx[hi]) + 1)
    score = 1000.0 * (1.0 - max_depth / axis.length)
    return BulgeResult(score, max_depth, location, classify_bulge(score, thresholds))


def segment_partition(n_points: int, apex_index: int) -> list[tuple[int, int]]:
    """Seven contiguous ``[start, stop)`` arcs covering ``range(n_points)``.

    The middle (apical) arc is centred on ``apex_index``; the three arcs on
    either side split the remaining points as evenly as possible.
    """
    if n_points < N_SEGMENTS:
        raise ValueError(f"need at least {N_SEGMENTS} contour points, got {n_points}")
    size = max(1, round(n_points / N_SEGMENTS))
    start = apex_index - size // 2
    start = min(max(start, 3), n_points - size - 3)
    stop = start + size

    def split(lo, hi):
        cuts = np.linspace(lo, hi, 4).round().astype(int)
        return [(int(a), int(b)) for a, b in zip(cuts[:-1], cuts[1:])]

    return split(0, start) + [(start, stop)] + split(stop, n_points)


@dataclass(frozen=True)
class SegmentState:
    mean_displacement: tuple[float, float]
    relative_displacement: tuple[float, float]
    label: str


@dataclass(frozen=True)
class SegmentMotion:
    per_segment: tuple[SegmentState, ...]
    basal_vertical: float
    ranges: tuple[tuple[int, int], ...] = field(default=())

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(s.label for s in self.per_segment)


def segment_motion(
    ed: ContourFrame,
    es: ContourFrame,
    hypo_threshold_percent: float = 1.0,
    vertical_mode: str = "axis",
) -> SegmentMotion:
    """Per-segment ED->ES motion relative to the global contraction.

    Global motion is the least-squares translation plus separate scalings
    along and across the ED long axis about the ED centroid, refit without
    dyskinetic segments until the labels settle; a segment's relative
    displacement is its mean residual.  A
    segment is normal when that residual points inward (or is zero),
    hypokinetic when it points outward by less than ``hypo_threshold_percent``
    of the ED axis length, dyskinetic otherwise.
    """
    p0, p1 = ed.xy, es.xy
    if p0.shape != p1.shape:
        raise PointCountMismatch(f"ED has {len(p0)} points, ES has {len(p1)}")
    axis = long_axis(ed)
    eps = _REL_EPS * axis.length
    hypo = hypo_threshold_percent / 100.0 * axis.length

    disp = p1 - p0
    centroid = p0.mean(axis=0)
    rel_pos = p0 - centroid
    ranges = segment_partition(len(p0), ed.apex_index)
    d = np.asarray(axis.direction)
    along = np.outer(rel_pos @ d, d)  # axial part of each point's offset
    across = rel_pos - along
    design = np.zeros((2 * len(p0), 4))
    design[0::2, 0] = 1.0
    design[1::2, 1] = 1.0
    design[:, 2] = along.ravel()
    design[:, 3] = across.ravel()

    used = np.ones(len(p0), dtype=bool)
    while True:
        rows = np.repeat(used, 2)
        params, *_ = np.linalg.lstsq(design[rows], disp.ravel()[rows], rcond=None)
        residual = disp - (design @ params).reshape(-1, 2)
        states = []
        for lo, hi in ranges:
            mean_d = disp[lo:hi].mean(axis=0)
            rel = residual[lo:hi].mean(axis=0)
            outward = p0[lo:hi].mean(axis=0) - centroid
            norm = np.linalg.norm(outward)
            out_comp = float(rel @ outward / norm) if norm > 0 else 0.0
            if out_comp <= eps:
                label = "normal"
            elif out_comp < hypo:
                label = "hypokinetic"
            else:
                label = "dyskinetic"
            states.append(SegmentState(tuple(map(float, mean_d)), tuple(map(float, rel)), label))
        # dyskinetic segments are refit out of the global model so they cannot drag it
        keep = np.ones(len(p0), dtype=bool)
        for (lo, hi), st in zip(ranges, states):
            if st.label == "dyskinetic":
                keep[lo:hi] = False
        if np.array_equal(keep, used) or sum(s.label == "dyskinetic" for s in states) > 3:
            break
        used = keep

    basal_disp = (
        np.subtract(es.basal_left, ed.basal_left) + np.subtract(es.basal_right, ed.basal_right)
    ) / 2.0
    if vertical_mode == "axis":
        toward_apex = -np.asarray(axis.direction)
    elif vertical_mode == "image_y":
        sign = math.copysign(1.0, ed.apex[1] - axis.base_mid[1])
        toward_apex = np.array([0.0, sign])
    else:
        raise ValueError(f"vertical_mode must be 'axis' or 'image_y', got {vertical_mode!r}")
    vertical = float(basal_disp @ toward_apex)
    if abs(vertical) <= eps:
        vertical = 0.0
    return SegmentMotion(tuple(states), vertical, tuple(ranges))


@dataclass(frozen=True)
class ApexMotion:
    displacement_along_axis: float
    percent_of_length: float
    suspicious: bool


def apex_motion(ed: ContourFrame, es: ContourFrame, threshold_percent: float = 8.0) -> ApexMotion:
    axis = long_axis(ed)
    disp = float(np.subtract(es.apex, ed.apex) @ np.asarray(axis.direction))
    pct = 100.0 * abs(disp) / axis.length
    return ApexMotion(disp, pct, pct > threshold_percent)


@dataclass(frozen=True)
class ShapeRatio:
    length: float
    mid_width: float
    ratio: float


def length_width_ratio(frame: ContourFrame) -> ShapeRatio:
    """Apex-to-base length over the contour width at the axis midpoint."""
    axis = long_axis(frame)
    width = polygon.chord_width(frame.xy, axis.point_at(0.5), axis.normal)
    if width <= 0:
        raise NonPositiveWidth("contour has no width at the long-axis midpoint")
    return ShapeRatio(axis.length, width, axis.length / width)


@dataclass(frozen=True)
class SectorOverlap:
    intersection_area: float
    contour_area: float
    ratio: float


def sector_intersection(frame: ContourFrame, sector) -> SectorOverlap:
    """Fraction of the contour area lying inside the imaging sector."""
    sec = polygon.as_array(sector)
    if len(sec) < 3 or not polygon.is_simple(sec) or polygon.area(sec) <= 0:
        raise InvalidSector("sector must be a simple polygon with positive area")
    xy = frame.xy
    inter = polygon.clip_area(xy, sec)
    total = polygon.area(xy)
    ratio = min(1.0, max(0.0, inter / total))
    return SectorOverlap(inter, total, ratio)


def area_change_percent(ed: ContourFrame, es: ContourFrame) -> float:
    """Fractional area change ED->ES, in percent."""
    a_ed = polygon.area(ed.xy)
    return 100.0 * (a_ed - polygon.area(es.xy)) / a_ed


@dataclass(frozen=True)
class AttributeVector:
    """All measured attributes for one cycle; image-dependent ones may be ``None``."""

    video_id: str
    edv: float
    esv: float
    ef: float
    bulge_score: float
    bulge_depth: float
    bulge_class: str
    length: float
    mid_width: float
    length_width_ratio: float
    apex_displacement: float
    apex_percent: float
    apex_suspicious: bool
    segment_labels: tuple[str, ...]
    basal_vertical: float
    basal_vertical_percent: float
    area_change_percent: float
    sector_ratio: Optional[float] = None
    contrast: Optional[float] = None
    contrast_mode: Optional[str] = None
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        doc = {f: getattr(self, f) for f in self.__dataclass_fields__}
        doc["segment_labels"] = list(self.segment_labels)
        doc["warnings"] = list(self.warnings)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "AttributeVector":
        doc = dict(doc)
        doc["segment_labels"] = tuple(doc.get("segment_labels", ()))
        doc["warnings"] = tuple(doc.get("warnings", ()))
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in doc.items() if k in known})


def compute_attribute_vector(
    cycle: CardiacCycle,
    sector=None,
    config: Thresholds = Thresholds(),
) -> AttributeVector:
    """Measure every attribute for a cycle.

    Contrast needs grayscale frames in ``cycle.frames``.  The sector ratio
    uses ``sector`` when given, otherwise a sector derived from the ED image
    when frames are present; without either both stay ``None``.
    """
    from . import frame_metrics

    warnings = []
    ed, es = order_ed_es(cycle.ed, cycle.es)
    if ed is not cycle.ed:
        warnings.append("es_larger_than_ed")

    edv = disk_volume(ed, config.n_disks)
    esv = disk_volume(es, config.n_disks)
    ef = ejection_fraction(VolumePair(edv, esv))
    bulge = bulge_score(ed, config.bulge_thresholds)
    shape = length_width_ratio(ed)
    apex = apex_motion(ed, es, config.apex_motion_percent)
    if len(ed.points) == len(es.points):
        motion = segment_motion(ed, es, config.hypo_threshold_percent, config.basal_vertical_mode)
        labels, vertical = motion.labels, motion.basal_vertical
    else:
        warnings.append("point_count_mismatch")
        labels, vertical = (), 0.0
    axis_len = long_axis(ed).length

    frames = cycle.frames or {}
    ed_img = frames.get(ed.frame_index)
    es_img = frames.get(es.frame_index)

    sector_ratio = None
    if sector is None and ed_img is not None:
        try:
            sector = frame_metrics.derive_sector(ed_img, config.sector_intensity_floor)
        except frame_metrics.EmptySector:
            warnings.append("empty_sector")
    if sector is not None:
        sector_ratio = sector_intersection(ed, sector).ratio

    contrast = None
    contrast_mode = None
    pairs = {"ed": [(ed_img, ed)], "es": [(es_img, es)], "mean": [(ed_img, ed), (es_img, es)]}
    chosen = pairs[config.contrast_frame]
    if all(img is not None for img, _ in chosen):
        results = [
            frame_metrics.cavity_wall_contrast(img, fr, config.contrast_band_px, config.contrast_mode)
            for img, fr in chosen
        ]
        contrast = float(np.mean([r.contrast for r in results]))
        contrast_mode = results[0].mode
        if any(r.fallback for r in results):
            warnings.append("contrast_difference_fallback")

    return AttributeVector(
        video_id=cycle.video_id,
        edv=edv,
        esv=esv,
        ef=ef,
        bulge_score=bulge.score,
        bulge_depth=bulge.max_defect_depth,
        bulge_class=bulge.category,
        length=shape.length,
        mid_width=shape.mid_width,
        length_width_ratio=shape.ratio,
        apex_displacement=apex.displacement_along_axis,
        apex_percent=apex.percent_of_length,
        apex_suspicious=apex.suspicious,
        segment_labels=tuple(labels),
        basal_vertical=vertical,
        basal_vertical_percent=100.0 * vertical / axis_len,
        area_change_percent=area_change_percent(ed, es),
        sector_ratio=sector_ratio,
        contrast=contrast,
        contrast_mode=contrast_mode,
        warnings=tuple(warnings),
    )
