"""Planar polygon primitives shared by the contour and geometry modules.

Polygons are ``(n, 2)`` float arrays of vertices, implicitly closed.  Signed
area follows the shoelace formula on the raw ``(x, y)`` values, so a positive
area is counterclockwise in the mathematical sense.
"""
from __future__ import annotations

import numpy as np
import shapely

from .errors import Collinear


def as_array(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected an (n, 2) array of points, got shape {arr.shape}")
    return arr


def signed_area(points) -> float:
    p = as_array(points)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def area(points) -> float:
    return abs(signed_area(points))


def is_simple(points) -> bool:
    """True if the closed polygon has no self-intersections or repeated vertices."""
    p = as_array(points)
    if len(p) < 3:
        return False
    poly = shapely.Polygon(p)
    return bool(shapely.is_valid(poly)) and bool(poly.exterior.is_simple)


def segment_distances(points, polygon, closed: bool = True) -> np.ndarray:
    """Distance from every point to the boundary of ``polygon``.

    Returns an array of shape ``(len(points),)``.  With ``closed=False`` the
    polygon is treated as an open polyline.
    """
    q = as_array(points)
    a = as_array(polygon)
    b = np.roll(a, -1, axis=0)
    if not closed:
        a, b = a[:-1], b[:-1]
    ab = b - a  # (m, 2)
    ab_len2 = np.einsum("ij,ij->i", ab, ab)
    ab_len2 = np.where(ab_len2 == 0.0, 1.0, ab_len2)
    aq = q[:, None, :] - a[None, :, :]  # (k, m, 2)
    t = np.clip(np.einsum("kmj,mj->km", aq, ab) / ab_len2, 0.0, 1.0)
    closest = a[None, :, :] + t[..., None] * ab[None, :, :]
    d = np.linalg.norm(q[:, None, :] - closest, axis=2)
    return d.min(axis=1)


def line_crossings(polygon, origin, direction) -> np.ndarray:
    """Sorted positions along ``direction`` where the line through ``origin`` crosses the polygon.

    ``direction`` must be a unit vector.  Vertices lying exactly on the line are
    resolved with the half-open rule, so the returned count is always even.
    """
    p = as_array(polygon) - np.asarray(origin, dtype=float)
    u = np.asarray(direction, dtype=float)
    n = np.array([-u[1], u[0]])
    along = p @ u
    across = p @ n
    a0, a1 = along, np.roll(along, -1)
    c0, c1 = across, np.roll(across, -1)
    crosses = (c0 > 0) != (c1 > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = c0 / (c0 - c1)
    pos = a0 + t * (a1 - a0)
    return np.sort(pos[crosses])


def chord_width(polygon, origin, direction) -> float:
    """Total length of the line through ``origin`` along ``direction`` that lies inside the polygon."""
    xs = line_crossings(polygon, origin, direction)
    if len(xs) < 2:
        return 0.0
    return float(np.sum(xs[1::2] - xs[0::2]))


def points_inside(polygon, xs, ys) -> np.ndarray:
    """Even-odd point-in-polygon test, vectorized over arrays ``xs``/``ys`` of equal shape."""
    p = as_array(polygon)
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    inside = np.zeros(np.broadcast(xs, ys).shape, dtype=bool)
    x0, y0 = p[:, 0], p[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    for ax, ay, bx, by in zip(x0, y0, x1, y1):
        if ay == by:
            continue
        straddles = (ay > ys) != (by > ys)
        x_cross = ax + (ys - ay) * (bx - ax) / (by - ay)
        inside ^= straddles & (xs < x_cross)
    return inside


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> np.ndarray:
    """Convex hull by Andrew's monotone chain.

    Returns the hull vertices counterclockwise (positive signed area), without
    collinear intermediate points.  Raises :class:`Collinear` when the points
    do not span a positive area.
    """
    pts = sorted(set(map(tuple, as_array(points).tolist())))
    if len(pts) < 3:
        raise Collinear(f"need at least 3 distinct points, got {len(pts)}")

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)

    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise Collinear("all points are collinear")
    return np.array(hull, dtype=float)


def clip_area(subject, clip) -> float:
    """Area of the intersection of two simple polygons."""
    a = shapely.Polygon(as_array(subject))
    b = shapely.Polygon(as_array(clip))
    return float(shapely.area(shapely.intersection(a, b)))
