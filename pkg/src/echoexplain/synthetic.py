"""Synthetic contours with known geometry, for demos and tests."""
from __future__ import annotations

import math

import numpy as np

from .contour_io import ContourFrame


def _closed_shape(radius_fn, center, n, frame_index, spacing):
    """Star-shaped contour around ``center`` with the apex straight up.

    ``radius_fn(theta)`` returns ``(dx, dy_up)`` offsets for polar angle theta
    measured from the apex.  ``n`` is odd so the bottom falls between two
    vertices, which become the basal landmarks.
    """
    if n % 2 == 0:
        n += 1
    cx, cy = center
    theta = 2 * math.pi * np.arange(n) / n
    dx, dy = radius_fn(theta)
    pts = np.column_stack([cx + dx, cy - dy])
    right_of_base, left_of_base = (n - 1) // 2, (n + 1) // 2
    return ContourFrame.from_points(
        pts,
        tuple(pts[0]),
        tuple(pts[left_of_base]),
        tuple(pts[right_of_base]),
        frame_index=frame_index,
        spacing=spacing,
    )


def ellipse_frame(a=45.0, b=20.0, center=(56.0, 60.0), n=201, frame_index=0, spacing=1.0):
    """Full ellipse, semi-axis ``a`` along the (vertical) long axis and ``b`` across."""
    return _closed_shape(
        lambda t: (b * np.sin(t), a * np.cos(t)), center, n, frame_index, spacing
    )


def circle_frame(r=30.0, center=(56.0, 56.0), n=201, frame_index=0, spacing=1.0):
    return ellipse_frame(r, r, center, n, frame_index, spacing)


def star_frame(rng, radius=30.0, center=(60.0, 60.0), n=121, harmonics=4, amplitude=0.12,
               frame_index=0, spacing=1.0):
    """Random smooth star-convex contour: radius modulated by a few low harmonics."""
    coef = rng.uniform(-1, 1, size=(harmonics, 2)) * amplitude / harmonics
    stretch = rng.uniform(1.2, 2.0)

    def shape(t):
        r = radius * (1 + sum(c * np.cos((k + 2) * t) + s * np.sin((k + 2) * t)
                              for k, (c, s) in enumerate(coef)))
        return r * np.sin(t), stretch * r * np.cos(t)

    return _closed_shape(shape, center, n, frame_index, spacing)


def bullet_frame(length=90.0, width=45.0, base_y=100.0, center_x=56.0, n_wall=12, n_cap=41,
                 frame_index=0, spacing=1.0):
    """Flat-based bullet: straight walls up to half the length, elliptical apical cap.

    The width at the long-axis midpoint is exactly ``width``.
    """
    half = width / 2.0
    mid_y = base_y - length / 2.0
    left_wall = [(center_x - half, y) for y in np.linspace(base_y, mid_y, n_wall, endpoint=False)]
    t = np.linspace(-math.pi / 2, math.pi / 2, n_cap)
    cap = [(center_x + half * math.sin(a), mid_y - (length / 2.0) * math.cos(a)) for a in t]
    right_wall = [(center_x + half, y) for y in np.linspace(mid_y, base_y, n_wall + 1)[1:]]
    pts = left_wall + cap + right_wall
    apex = (center_x, base_y - length)
    return ContourFrame.from_points(
        pts, apex, left_wall[0], right_wall[-1], frame_index=frame_index, spacing=spacing
    )


def scaled_about(frame: ContourFrame, factor: float, center=None, frame_index=None) -> ContourFrame:
    """Copy of ``frame`` scaled by ``factor`` about ``center`` (default: vertex centroid)."""
    c = frame.xy.mean(axis=0) if center is None else np.asarray(center, dtype=float)

    def move(p):
        return tuple(c + factor * (np.asarray(p) - c))

    return ContourFrame(
        points=tuple(move(p) for p in frame.points),
        apex=move(frame.apex),
        basal_left=move(frame.basal_left),
        basal_right=move(frame.basal_right),
        frame_index=frame.frame_index if frame_index is None else frame_index,
        spacing=frame.spacing,
    )


def ellipse_tracings(a=45.0, b=20.0, center=(56.0, 60.0), n_chords=20, file_name="synthetic.avi",
                     frame=0):
    """EchoNet-style tracing rows for an ellipse: long axis then ``n_chords`` chords.

    Chords sit at the centres of ``n_chords`` equal slices of the long axis.
    """
    cx, cy = center
    rows = [(file_name, cx, cy - a, cx, cy + a, frame)]
    for i in range(n_chords):
        y = cy - a + (i + 0.5) * 2 * a / n_chords
        half = b * math.sqrt(max(0.0, 1 - ((y - cy) / a) ** 2))
        rows.append((file_name, cx - half, y, cx + half, y, frame))
    return rows


def tracing_csv(rows) -> str:
    lines = ["FileName,X1,Y1,X2,Y2,Frame"]
    lines += [f"{r[0]},{r[1]!r},{r[2]!r},{r[3]!r},{r[4]!r},{r[5]}" for r in rows]
    return "\n".join(lines) + "\n"
