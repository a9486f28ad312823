"""Image-dependent attributes: cavity/wall contrast and the insonified sector.

Pixel ``(row, col)`` has its centre at ``(x, y) = (col, row)`` and covers the
unit square around it, matching the pixel coordinates of the tracings.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import polygon
from .contour_io import ContourFrame
from .errors import BadMagic, EmptyRegion, EmptySector, InputError, OutOfBounds, TruncatedData

REFERENCE_SIZE = 112
REFERENCE_BAND_PX = 4.0
_CAVITY_EPS = 1e-6


@dataclass(frozen=True, eq=False)
class GrayFrame:
    width: int
    height: int
    pixels: np.ndarray  # (height, width), intensities in [0, 255]

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.shape != (self.height, self.width):
            raise InputError(
                f"pixel array shape {px.shape} does not match {self.height}x{self.width}"
            )
        if px.size == 0:
            raise InputError("frame has no pixels")
        px = px.astype(float, copy=True)
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_array(cls, pixels) -> "GrayFrame":
        px = np.asarray(pixels)
        return cls(width=px.shape[1], height=px.shape[0], pixels=px)


_HEADER = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def _header_fields(data: bytes, count: int):
    pos = 0
    out = []
    for _ in range(count):
        m = _HEADER.match(data, pos)
        if not m:
            raise TruncatedData("PGM header ended early")
        out.append(m.group(1))
        pos = m.end()
    return out, pos


def load_pgm(data: bytes) -> GrayFrame:
    """Decode a binary (P5) PGM with ``maxval <= 255``."""
    if data[:2] != b"P5":
        raise BadMagic(f"expected binary PGM magic 'P5', got {data[:2]!r}")
    (magic, w, h, maxval), pos = _header_fields(data, 4)
    try:
        width, height, maxv = int(w), int(h), int(maxval)
    except ValueError:
        raise InputError("PGM header fields must be integers") from None
    if width <= 0 or height <= 0:
        raise InputError(f"PGM size must be positive, got {width}x{height}")
    if not 0 < maxv <= 255:
        raise InputError(f"only 8-bit PGM is supported (maxval {maxv})")
    pos += 1  # single whitespace byte after maxval
    need = width * height
    raster = data[pos : pos + need]
    if len(raster) < need:
        raise TruncatedData(f"expected {need} pixel bytes, found {len(raster)}")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return GrayFrame(width, height, pixels)


def dump_pgm(frame: GrayFrame) -> bytes:
    px = np.clip(np.rint(frame.pixels), 0, 255).astype(np.uint8)
    return b"P5\n%d %d\n255\n" % (frame.width, frame.height) + px.tobytes()


def load_raw(data: bytes, width: int, height: int) -> GrayFrame:
    """Raw 8-bit row-major pixels with externally supplied size."""
    need = width * height
    if len(data) < need:
        raise TruncatedData(f"expected {need} pixel bytes, found {len(data)}")
    return GrayFrame(width, height, np.frombuffer(data[:need], dtype=np.uint8).reshape(height, width))


def derive_sector(frame: GrayFrame, intensity_floor: float = 2) -> np.ndarray:
    """Convex hull of every pixel brighter than ``intensity_floor``, as a polygon."""
    bright = frame.pixels > intensity_floor
    rows = np.flatnonzero(bright.any(axis=1))
    if len(rows) == 0:
        raise EmptySector(f"no pixel above intensity {intensity_floor}")
    sub = bright[rows]
    first = sub.argmax(axis=1)
    last = sub.shape[1] - 1 - sub[:, ::-1].argmax(axis=1)
    corners = []
    for r, c0, c1 in zip(rows, first, last):
        corners += [(c0 - 0.5, r - 0.5), (c0 - 0.5, r + 0.5), (c1 + 0.5, r - 0.5), (c1 + 0.5, r + 0.5)]
    return polygon.convex_hull(corners)


@dataclass(frozen=True)
class ContrastResult:
    cavity_mean: float
    wall_mean: float
    contrast: float
    mode: str
    fallback: bool = False  # ratio requested but the cavity was black
    n_cavity: int = 0
    n_wall: int = 0


def default_band(frame: GrayFrame) -> float:
    return REFERENCE_BAND_PX * min(frame.width, frame.height) / REFERENCE_SIZE


def region_masks(frame: GrayFrame, contour: ContourFrame, band_px=None):
    """Boolean ``(cavity, wall)`` pixel masks for a contour."""
    xy = contour.xy
    lo = -0.5
    if (xy[:, 0].min() < lo or xy[:, 1].min() < lo
            or xy[:, 0].max() > frame.width - 0.5 or xy[:, 1].max() > frame.height - 0.5):
        raise OutOfBounds(f"contour extends beyond the {frame.width}x{frame.height} frame")
    band = default_band(frame) if band_px is None else float(band_px)
    ys, xs = np.mgrid[0 : frame.height, 0 : frame.width]
    inside = polygon.points_inside(xy, xs, ys)
    depth_in = ndimage.distance_transform_edt(inside)
    dist_out = ndimage.distance_transform_edt(~inside)
    cavity = inside & (depth_in > band)
    wall = ~inside & (dist_out <= band)
    return cavity, wall


def cavity_wall_contrast(
    frame: GrayFrame,
    contour: ContourFrame,
    band_px=None,
    mode: str = "ratio",
) -> ContrastResult:
    """Wall-to-cavity intensity contrast around a contour.

    The cavity is the contour interior eroded by ``band_px``; the wall is the
    ring of width ``band_px`` outside it.  ``mode="ratio"`` returns
    wall/cavity, falling back to the difference (flagged) for a black cavity.
    """
    if mode not in ("ratio", "difference"):
        raise ValueError(f"mode must be 'ratio' or 'difference', got {mode!r}")
    cavity, wall = region_masks(frame, contour, band_px)
    if not cavity.any():
        raise EmptyRegion("erosion removed the whole cavity")
    if not wall.any():
        raise EmptyRegion("no wall pixels around the contour")
    c_mean = float(frame.pixels[cavity].mean())
    w_mean = float(frame.pixels[wall].mean())
    fallback = False
    if mode == "ratio" and c_mean > _CAVITY_EPS:
        value = w_mean / c_mean
    else:
        fallback = mode == "ratio"
        value = w_mean - c_mean
    return ContrastResult(
        c_mean, w_mean, value, "difference" if fallback else mode, fallback,
        int(cavity.sum()), int(wall.sum()),
    )
