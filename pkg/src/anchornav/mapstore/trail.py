"""Breadcrumb trails: polyline length and distance-based resampling."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

from ..geom import Pose, compose

DEFAULT_SPACING = 1.0
_SNAP = 1e-9


@dataclass(frozen=True)
class BreadcrumbTrail:
    points: Tuple[Pose, ...]
    spacing: float = DEFAULT_SPACING

    def __post_init__(self) -> None:
        pts = tuple(self.points)
        object.__setattr__(self, "points", pts)
        if len(pts) < 2:
            raise ValueError(f"a trail needs at least 2 points, got {len(pts)}")
        if not (self.spacing > 0.0 and math.isfinite(self.spacing)):
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        frames = {p.frame for p in pts}
        if len(frames) != 1:
            raise ValueError(f"trail points span several frames: {sorted(frames)}")
        limit = self.spacing + 1e-6
        for i in range(1, len(pts)):
            gap = pts[i - 1].distance_to(pts[i])
            if gap > limit:
                raise ValueError(f"trail gap {gap:.6f} m at point {i} exceeds spacing {self.spacing}")

    @property
    def frame(self) -> str:
        return self.points[0].frame

    @property
    def length(self) -> float:
        return path_length(self)

    def positions(self):
        return [p.position for p in self.points]

    def reversed(self) -> "BreadcrumbTrail":
        """Same crumbs walked backwards, each turned to face the new direction."""
        about_face = Pose(orientation=(0.0, 0.0, 0.0, 1.0))
        flipped = tuple(compose(p, about_face) for p in reversed(self.points))
        return BreadcrumbTrail(flipped, self.spacing)


def path_length(trail) -> float:
    """Sum of distances between consecutive crumbs (not the end-to-end displacement)."""
    points = trail.points if isinstance(trail, BreadcrumbTrail) else list(trail)
    if len(points) < 2:
        raise ValueError("path length needs at least 2 points")
    total = 0.0
    for a, b in zip(points, points[1:]):
        total += a.distance_to(b)
    return total


def _crossing(a, b, center, t0, radius):
    """Largest root t >= t0 of |a + t(b - a) - center| = radius, or None."""
    d = [b[i] - a[i] for i in range(3)]
    f = [a[i] - center[i] for i in range(3)]
    qa = d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
    if qa == 0.0:
        return None
    qb = 2.0 * (d[0] * f[0] + d[1] * f[1] + d[2] * f[2])
    qc = f[0] * f[0] + f[1] * f[1] + f[2] * f[2] - radius * radius
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0.0:
        return None
    t = (-qb + math.sqrt(disc)) / (2.0 * qa)
    if t < t0 - _SNAP or t > 1.0 + _SNAP:
        return None
    return min(max(t, t0), 1.0)


def resample_trail(points: Sequence[Pose], spacing: float = DEFAULT_SPACING) -> BreadcrumbTrail:
    """Resample a raw crumb recording so consecutive crumbs sit ``spacing`` apart.

    Walks the polyline and drops a crumb each time the straight-line distance
    from the previous crumb reaches ``spacing``. Every chord except the last is
    exactly ``spacing`` long, which makes the operation idempotent; the first
    and last input points are kept verbatim. Crumb orientation is copied from
    the raw point that starts the segment it falls on.
    """
    if not spacing > 0.0:
        raise ValueError(f"spacing must be positive, got {spacing}")
    pts = list(points)
    if len(pts) < 2:
        raise ValueError("resampling needs at least 2 points")
    frame = pts[0].frame
    out = [pts[0]]
    current = pts[0].position
    seg, t0 = 0, 0.0
    while seg < len(pts) - 1:
        a, b = pts[seg].position, pts[seg + 1].position
        t = _crossing(a, b, current, t0, spacing)
        if t is None:
            seg, t0 = seg + 1, 0.0
            continue
        if t >= 1.0:
            pos, src = b, pts[seg + 1]
        else:
            pos = tuple(a[i] + t * (b[i] - a[i]) for i in range(3))
            src = pts[seg]
        out.append(Pose(pos, src.orientation, frame))
        current, t0 = pos, t
    last = pts[-1]
    if len(out) > 1 and math.dist(out[-1].position, last.position) < _SNAP:
        out[-1] = last
    else:
        out.append(last)
    return BreadcrumbTrail(tuple(out), spacing)
