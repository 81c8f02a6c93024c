"""Planar geometry helpers: angle wrapping, polylines, oriented boxes."""

from __future__ import annotations

import math

import numpy as np


def wrap_angle(a: float) -> float:
    """Map an angle to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


def box_corners(x: float, y: float, psi: float, length: float, width: float) -> np.ndarray:
    c, s = math.cos(psi), math.sin(psi)
    hl, hw = 0.5 * length, 0.5 * width
    local = ((hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw))
    return np.array([(x + c * a - s * b, y + s * a + c * b) for a, b in local])


def boxes_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating-axis test for two convex quads given as 4x2 corner arrays."""
    for poly in (a, b):
        for i in range(4):
            p, q = poly[i], poly[(i + 1) % 4]
            nx, ny = q[1] - p[1], p[0] - q[0]
            pa = a[:, 0] * nx + a[:, 1] * ny
            pb = b[:, 0] * nx + b[:, 1] * ny
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


def point_in_polygon(x: float, y: float, poly) -> bool:
    inside = False
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xc:
                inside = not inside
    return inside


class Polyline:
    """Arc-length parameterized polyline with projection.

    Collinear interior points are dropped on construction; arc lengths are
    unaffected.  Segment loops are plain Python since lanes have few segments.
    """

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError("polyline needs at least two 2D points")
        seg = np.diff(pts, axis=0)
        if np.any(np.hypot(seg[:, 0], seg[:, 1]) <= 0):
            raise ValueError("polyline has repeated points")
        keep = [0]
        for i in range(1, len(pts) - 1):
            a, b = seg[i - 1], seg[i]
            cross = a[0] * b[1] - a[1] * b[0]
            if abs(cross) > 1e-9 * np.hypot(*a) * np.hypot(*b) or a @ b <= 0:
                keep.append(i)
        keep.append(len(pts) - 1)
        pts = pts[keep]
        seg = np.diff(pts, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        self.points = pts
        self.seg_len = seg_len
        self.unit = seg / seg_len[:, None]
        self.cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        self.length = float(self.cum[-1])
        self._segs = [
            (float(p[0]), float(p[1]), float(u[0]), float(u[1]), float(l), float(c))
            for p, u, l, c in zip(pts[:-1], self.unit, seg_len, self.cum[:-1])
        ]

    def pose_at(self, s: float) -> tuple[float, float, float]:
        """Pose at arc length ``s``; linear extrapolation past either end."""
        segs = self._segs
        i = 0
        while i < len(segs) - 1 and s >= segs[i + 1][5]:
            i += 1
        px, py, ux, uy, _, c = segs[i]
        return px + ux * (s - c), py + uy * (s - c), math.atan2(uy, ux)

    def _nearest(self, x: float, y: float):
        best = None
        for i, (px, py, ux, uy, l, c) in enumerate(self._segs):
            dx, dy = x - px, y - py
            along = dx * ux + dy * uy
            t = min(max(along, 0.0), l)
            ex, ey = dx - ux * t, dy - uy * t
            d2 = ex * ex + ey * ey
            if best is None or d2 < best[0]:
                best = (d2, i, along, t, ux * dy - uy * dx)
        return best

    def project(self, x: float, y: float) -> tuple[float, float, float]:
        """Return (arc length, signed lateral offset with left positive, tangent heading)."""
        _, i, along, t, lat = self._nearest(x, y)
        px, py, ux, uy, l, c = self._segs[i]
        # beyond the ends the longitudinal overshoot is kept so progress stays monotone
        if (i == 0 and along < 0) or (i == len(self._segs) - 1 and along > l):
            s = c + along
        else:
            s = c + t
        return s, lat, math.atan2(uy, ux)

    def distance(self, x: float, y: float) -> float:
        return math.sqrt(self._nearest(x, y)[0])
