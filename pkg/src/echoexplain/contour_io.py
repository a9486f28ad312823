"""Contour and cardiac-cycle values, plus readers for EchoNet tracings and native JSON.

A contour is stored in canonical order: counterclockwise (positive shoelace
area on raw pixel coordinates), starting at the vertex nearest ``basal_left``
and reaching the apex before ``basal_right``.  With the apex at the top of the
image this runs up the left (septal) wall first.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional, TextIO, Union

import numpy as np

from . import polygon
from .errors import (
    DegenerateAxis,
    DegenerateContour,
    EmptyInput,
    InvariantViolation,
    MalformedRow,
    SchemaError,
    SelfIntersecting,
)

Point = tuple[float, float]

TRACING_COLUMNS = ("FileName", "X1", "Y1", "X2", "Y2", "Frame")
FILE_LIST_COLUMNS = ("FileName", "EF", "ESV", "EDV")

APEX_TOLERANCE_PX = 2.0


def _point(value, name: str) -> Point:
    try:
        x, y = value
        pt = (float(x), float(y))
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{name}: expected [x, y], got {value!r}") from exc
    if not all(math.isfinite(c) for c in pt):
        raise SchemaError(f"{name}: non-finite coordinate {value!r}")
    return pt


@dataclass(frozen=True)
class ContourFrame:
    points: tuple[Point, ...]
    apex: Point
    basal_left: Point
    basal_right: Point
    frame_index: int = 0
    spacing: float = 1.0

    def __post_init__(self):
        if self.frame_index < 0:
            raise InvariantViolation("frame_index >= 0", f"got {self.frame_index}")
        if not (self.spacing > 0 and math.isfinite(self.spacing)):
            raise InvariantViolation("spacing > 0", f"got {self.spacing}")
        if len(self.points) < 3:
            raise DegenerateContour(f"fewer than 3 boundary points ({len(self.points)})")
        xy = self.xy
        if not np.all(np.isfinite(xy)):
            raise InvariantViolation("finite coordinates")
        if polygon.area(xy) <= 0:
            raise DegenerateContour("zero polygon area")
        if not polygon.is_simple(xy):
            raise SelfIntersecting()
        tol = APEX_TOLERANCE_PX
        gap = float(polygon.segment_distances([self.apex], xy)[0])
        if gap > tol:
            raise InvariantViolation(
                "apex lies on the contour", f"apex is {gap:.2f} px away, tolerance {tol:.2f} px"
            )

    @classmethod
    def from_points(
        cls,
        points,
        apex,
        basal_left,
        basal_right,
        frame_index: int = 0,
        spacing: float = 1.0,
    ) -> "ContourFrame":
        """Build a frame from arbitrary-order input, enforcing canonical ordering."""
        pts = polygon.as_array(points)
        apex = _point(apex, "apex")
        bl = _point(basal_left, "basal_left")
        br = _point(basal_right, "basal_right")
        pts, bl, br = canonical_order(pts, apex, bl, br)
        return cls(
            points=tuple((float(x), float(y)) for x, y in pts),
            apex=apex,
            basal_left=bl,
            basal_right=br,
            frame_index=int(frame_index),
            spacing=float(spacing),
        )

    @property
    def xy(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float)

    @property
    def base_mid(self) -> Point:
        (lx, ly), (rx, ry) = self.basal_left, self.basal_right
        return ((lx + rx) / 2.0, (ly + ry) / 2.0)

    @property
    def axis_length(self) -> float:
        return math.dist(self.apex, self.base_mid)

    @property
    def apex_index(self) -> int:
        return int(np.argmin(np.linalg.norm(self.xy - np.asarray(self.apex), axis=1)))

    def canonical(self) -> "ContourFrame":
        return ContourFrame.from_points(
            self.points, self.apex, self.basal_left, self.basal_right, self.frame_index, self.spacing
        )

    def scaled(self, factor: float) -> "ContourFrame":
        """Uniformly scaled copy about the origin (spacing unchanged)."""
        s = float(factor)
        return ContourFrame(
            points=tuple((x * s, y * s) for x, y in self.points),
            apex=(self.apex[0] * s, self.apex[1] * s),
            basal_left=(self.basal_left[0] * s, self.basal_left[1] * s),
            basal_right=(self.basal_right[0] * s, self.basal_right[1] * s),
            frame_index=self.frame_index,
            spacing=self.spacing,
        )

    def transformed(self, rotation_deg: float = 0.0, shift=(0.0, 0.0)) -> "ContourFrame":
        """Rigidly moved copy: rotate about the origin, then translate."""
        th = math.radians(rotation_deg)
        c, s = math.cos(th), math.sin(th)
        dx, dy = shift

        def move(p):
            return (c * p[0] - s * p[1] + dx, s * p[0] + c * p[1] + dy)

        return ContourFrame(
            points=tuple(move(p) for p in self.points),
            apex=move(self.apex),
            basal_left=move(self.basal_left),
            basal_right=move(self.basal_right),
            frame_index=self.frame_index,
            spacing=self.spacing,
        )


def _nearest(pts: np.ndarray, p: Point) -> int:
    return int(np.argmin(np.linalg.norm(pts - np.asarray(p), axis=1)))


def canonical_order(pts: np.ndarray, apex: Point, bl: Point, br: Point):
    """Reorder contour vertices canonically; may swap the basal labels.

    Returns ``(points, basal_left, basal_right)``.
    """
    pts = polygon.as_array(pts)
    if len(pts) < 3:
        raise DegenerateContour(f"fewer than 3 boundary points ({len(pts)})")
    if polygon.signed_area(pts) < 0:
        pts = pts[::-1]
    pts = np.roll(pts, -_nearest(pts, bl), axis=0)
    if _nearest(pts, apex) > _nearest(pts, br):
        # counterclockwise from basal_left meets basal_right before the apex,
        # so the labels are mirrored relative to the long axis
        bl, br = br, bl
        pts = np.roll(pts, -_nearest(pts, bl), axis=0)
    return pts, bl, br


@dataclass(frozen=True)
class Reference:
    ef: Optional[float] = None
    edv: Optional[float] = None
    esv: Optional[float] = None


@dataclass(frozen=True)
class CardiacCycle:
    video_id: str
    ed: ContourFrame
    es: ContourFrame
    frames: Optional[Mapping[int, Any]] = field(default=None, compare=False, repr=False)
    reference: Optional[Reference] = None

    def __post_init__(self):
        if self.ed.frame_index == self.es.frame_index:
            raise InvariantViolation(
                "ed.frame_index != es.frame_index", f"both are {self.ed.frame_index}"
            )


@dataclass(frozen=True)
class TracingRecord:
    file_name: str
    x1: float
    y1: float
    x2: float
    y2: float
    frame: int
    line: int = field(default=0, compare=False)


def video_id_from_file_name(name: str) -> str:
    """EchoNet lists carry ``0X1A.avi`` in tracings but ``0X1A`` in FileList."""
    stem = name.strip()
    if stem.lower().endswith(".avi"):
        stem = stem[:-4]
    return stem


def _read_text(text: Union[str, TextIO]) -> str:
    return text if isinstance(text, str) else text.read()


def _check_header(row: list[str], expected: Iterable[str], line: int = 1):
    got = [c.strip().lower() for c in row]
    want = [c.lower() for c in expected]
    if got[: len(want)] != want:
        raise MalformedRow(line, f"header must start with {','.join(expected)}, got {','.join(row)}")


def parse_volume_tracings(text: Union[str, TextIO]) -> dict[str, dict[int, list[TracingRecord]]]:
    """Parse an EchoNet ``VolumeTracings.csv`` into ``{video: {frame: [records]}}``.

    Row order inside each frame group is preserved; the first record of a
    group is the long axis, the rest are chords.
    """
    body = _read_text(text)
    if not body.strip():
        raise EmptyInput("tracing file is empty")
    reader = csv.reader(io.StringIO(body))
    header = next(reader)
    _check_header(header, TRACING_COLUMNS)
    if len(header) != len(TRACING_COLUMNS):
        raise MalformedRow(1, f"expected {len(TRACING_COLUMNS)} header columns, got {len(header)}")

    out: dict[str, dict[int, list[TracingRecord]]] = {}
    n_rows = 0
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 6:
            raise MalformedRow(line, f"expected 6 fields, got {len(row)}")
        name = row[0].strip()
        if not name:
            raise MalformedRow(line, "empty FileName")
        coords = []
        for col, raw in zip(TRACING_COLUMNS[1:5], row[1:5]):
            try:
                v = float(raw)
            except ValueError:
                raise MalformedRow(line, f"{col} is not a number: {raw!r}") from None
            if not math.isfinite(v) or v < 0:
                raise MalformedRow(line, f"{col} must be finite and >= 0, got {raw!r}")
            coords.append(v)
        try:
            frame_f = float(row[5])
        except ValueError:
            raise MalformedRow(line, f"Frame is not a number: {row[5]!r}") from None
        if not math.isfinite(frame_f) or frame_f < 0 or frame_f != int(frame_f):
            raise MalformedRow(line, f"Frame must be a non-negative integer, got {row[5]!r}")
        rec = TracingRecord(name, *coords, frame=int(frame_f), line=line)
        out.setdefault(video_id_from_file_name(name), {}).setdefault(rec.frame, []).append(rec)
        n_rows += 1
    if n_rows == 0:
        raise EmptyInput("tracing file has a header but no records")
    return out


def parse_file_list(text: Union[str, TextIO]) -> dict[str, Reference]:
    """Read ``FileList.csv`` reference values keyed by video id."""
    body = _read_text(text)
    if not body.strip():
        raise EmptyInput("file list is empty")
    reader = csv.reader(io.StringIO(body))
    header = next(reader)
    _check_header(header, FILE_LIST_COLUMNS)
    refs = {}
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < 4:
            raise MalformedRow(line, f"expected at least 4 fields, got {len(row)}")
        try:
            ef, esv, edv = (float(v) for v in row[1:4])
        except ValueError:
            raise MalformedRow(line, "EF/ESV/EDV must be numeric") from None
        refs[video_id_from_file_name(row[0])] = Reference(ef=ef, edv=edv, esv=esv)
    return refs


def tracing_to_contour(records: list[TracingRecord], spacing: float = 1.0) -> ContourFrame:
    """Assemble one frame's tracing records into a canonical :class:`ContourFrame`.

    The first record is the long axis (apex first); the remaining records are
    chords across it.  Chord order in the input does not matter.
    """
    if not records:
        raise DegenerateContour("no tracing records")
    axis, chords = records[0], list(records[1:])
    apex = np.array([axis.x1, axis.y1])
    base = np.array([axis.x2, axis.y2])
    length = float(np.linalg.norm(base - apex))
    if length < 1.0:
        raise DegenerateAxis(f"long-axis length {length:.3f} px < 1 px")
    if 2 * len(chords) < 3:
        raise DegenerateContour(f"fewer than 3 boundary points ({2 * len(chords)})")

    ends = np.array([[[c.x1, c.y1], [c.x2, c.y2]] for c in chords])  # (k, 2, 2)
    mids = ends.mean(axis=1)
    widths = np.linalg.norm(ends[:, 0] - ends[:, 1], axis=1)

    d = (base - apex) / length
    station = (mids - apex) @ d
    if widths[np.argmin(station)] > widths[np.argmax(station)]:
        # the wide end is the mitral annulus; the record was written base-first
        apex, base = base, apex
        d = -d
        station = (mids - apex) @ d

    normal = np.array([d[1], -d[0]])
    side = (ends - apex) @ normal  # (k, 2)
    left = np.where((side[:, 0] <= side[:, 1])[:, None], ends[:, 0], ends[:, 1])
    right = np.where((side[:, 0] <= side[:, 1])[:, None], ends[:, 1], ends[:, 0])

    # sort base -> apex; ties broken on coordinates so any input permutation agrees
    order = sorted(range(len(chords)), key=lambda i: (-station[i], *left[i], *right[i]))
    left, right = left[order], right[order]
    # the axis apex closes the tip so disk stations near it stay inside the contour
    tip = [apex] if np.min(np.linalg.norm(np.vstack([left, right]) - apex, axis=1)) > 1e-9 else []
    contour = np.vstack([left, *tip, right[::-1]])
    return ContourFrame.from_points(
        contour, tuple(apex), tuple(left[0]), tuple(right[0]),
        frame_index=axis.frame, spacing=spacing,
    )


def cycle_from_tracings(
    video_id: str,
    frames: Mapping[int, list[TracingRecord]],
    reference: Optional[Reference] = None,
    spacing: float = 1.0,
) -> CardiacCycle:
    """Build an ED/ES-ordered cycle from the two traced frames of one video."""
    if len(frames) != 2:
        raise SchemaError(f"{video_id}: expected 2 traced frames, got {len(frames)}")
    a, b = (tracing_to_contour(recs, spacing) for recs in frames.values())
    ed, es = order_ed_es(a, b)
    return CardiacCycle(video_id=video_id, ed=ed, es=es, reference=reference)


def order_ed_es(frame_a: ContourFrame, frame_b: ContourFrame) -> tuple[ContourFrame, ContourFrame]:
    """Return ``(ed, es)`` with the larger disk volume first; ties keep input order."""
    from .geometry import disk_volume

    if disk_volume(frame_b) > disk_volume(frame_a):
        return frame_b, frame_a
    return frame_a, frame_b


# -- native JSON -------------------------------------------------------------

def frame_to_dict(frame: ContourFrame) -> dict:
    return {
        "frame_index": frame.frame_index,
        "points": [list(p) for p in frame.points],
        "apex": list(frame.apex),
        "basal_left": list(frame.basal_left),
        "basal_right": list(frame.basal_right),
    }


def cycle_to_dict(cycle: CardiacCycle) -> dict:
    doc = {
        "video_id": cycle.video_id,
        "spacing": cycle.ed.spacing,
        "ed": frame_to_dict(cycle.ed),
        "es": frame_to_dict(cycle.es),
    }
    if cycle.reference is not None:
        doc["reference"] = {
            "ef": cycle.reference.ef,
            "edv": cycle.reference.edv,
            "esv": cycle.reference.esv,
        }
    return doc


def dump_cycle(cycle: CardiacCycle) -> str:
    return json.dumps(cycle_to_dict(cycle))


def _frame_from_dict(doc: Any, name: str, spacing: float) -> ContourFrame:
    if not isinstance(doc, dict):
        raise SchemaError(f"{name}: expected an object")
    for key in ("frame_index", "points", "apex", "basal_left", "basal_right"):
        if key not in doc:
            raise SchemaError(f"{name}: missing key {key!r}")
    idx = doc["frame_index"]
    if isinstance(idx, bool) or not isinstance(idx, int):
        raise SchemaError(f"{name}.frame_index: expected an integer, got {idx!r}")
    pts = doc["points"]
    if not isinstance(pts, list):
        raise SchemaError(f"{name}.points: expected a list")
    points = [_point(p, f"{name}.points[{i}]") for i, p in enumerate(pts)]
    return ContourFrame.from_points(
        points,
        _point(doc["apex"], f"{name}.apex"),
        _point(doc["basal_left"], f"{name}.basal_left"),
        _point(doc["basal_right"], f"{name}.basal_right"),
        frame_index=idx,
        spacing=spacing,
    )


def cycle_from_dict(doc: Any) -> CardiacCycle:
    if not isinstance(doc, dict):
        raise SchemaError("cycle document must be a JSON object")
    for key in ("video_id", "ed", "es"):
        if key not in doc:
            raise SchemaError(f"missing key {key!r}")
    if not isinstance(doc["video_id"], str):
        raise SchemaError("video_id must be a string")
    spacing = doc.get("spacing", 1.0)
    if isinstance(spacing, bool) or not isinstance(spacing, (int, float)):
        raise SchemaError(f"spacing must be a number, got {spacing!r}")
    reference = None
    if doc.get("reference") is not None:
        ref = doc["reference"]
        if not isinstance(ref, dict):
            raise SchemaError("reference must be an object")
        try:
            reference = Reference(
                **{k: (None if ref.get(k) is None else float(ref[k])) for k in ("ef", "edv", "esv")}
            )
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"reference values must be numbers: {exc}") from exc
    return CardiacCycle(
        video_id=doc["video_id"],
        ed=_frame_from_dict(doc["ed"], "ed", float(spacing)),
        es=_frame_from_dict(doc["es"], "es", float(spacing)),
        reference=reference,
    )


def parse_cycle(text: Union[str, TextIO], format: str = "native-json", spacing: float = 1.0) -> CardiacCycle:
    """Parse one cardiac cycle from a native JSON document or an EchoNet tracing file.

    ``spacing`` applies only to the EchoNet route; native documents carry their own.
    """
    body = _read_text(text)
    if format == "native-json":
        try:
            doc = json.loads(body)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from exc
        return cycle_from_dict(doc)
    if format == "echonet":
        groups = parse_volume_tracings(body)
        if len(groups) != 1:
            raise SchemaError(f"expected tracings for exactly one video, got {len(groups)}")
        (video_id, frames), = groups.items()
        return cycle_from_tracings(video_id, frames, spacing=spacing)
    raise ValueError(f"unknown format {format!r}; use 'native-json' or 'echonet'")
