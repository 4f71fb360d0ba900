"""Rigid-transform algebra and local geodesy.

Poses are immutable. Positions are in meters; orientations are unit
quaternions stored ``(w, x, y, z)``. Frames follow an east-north-up
convention: ``x`` east, ``y`` north, ``z`` up. The forward axis of a pose is
its body ``+y`` axis, so the identity pose faces north.

Two angle conventions meet here and should not be confused:

* ``yaw`` is the counter-clockwise rotation about ``+z`` (right-handed).
* ``heading`` / bearing is clockwise from north, in ``[0, 360)``.

For any pose ``heading == (-yaw) mod 360``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Tuple

EARTH_RADIUS = 6_371_000.0
MAX_TANGENT_DISTANCE = 10_000.0
QUAT_TOL = 1e-9

Vec3 = Tuple[float, float, float]
Quat = Tuple[float, float, float, float]


class GeoRangeError(ValueError):
    """Raised when a point lies outside the local tangent-plane validity range."""


def normalize_deg(angle: float) -> float:
    """Wrap ``angle`` into ``[0, 360)``."""
    a = math.fmod(angle, 360.0)
    if a < 0.0:
        a += 360.0
    # fmod of tiny negatives can round up to exactly 360
    return 0.0 if a >= 360.0 else a


def signed_deg(angle: float) -> float:
    """Wrap ``angle`` into ``(-180, 180]``."""
    a = normalize_deg(angle)
    return a - 360.0 if a > 180.0 else a


def _qmul(a: Quat, b: Quat) -> Quat:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def _qnormalize(q: Quat) -> Quat:
    n = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    if n == 0.0 or not math.isfinite(n):
        raise ValueError(f"cannot normalize quaternion {q}")
    if n == 1.0:
        return q
    return (q[0] / n, q[1] / n, q[2] / n, q[3] / n)


def _qrotate(q: Quat, v: Sequence[float]) -> Vec3:
    w, x, y, z = q
    vx, vy, vz = v
    # v + 2w(u x v) + 2 u x (u x v), u = (x, y, z)
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    return (
        vx + w * tx + (y * tz - z * ty),
        vy + w * ty + (z * tx - x * tz),
        vz + w * tz + (x * ty - y * tx),
    )


def quat_from_yaw(yaw_deg: float) -> Quat:
    half = math.radians(yaw_deg) / 2.0
    return (math.cos(half), 0.0, 0.0, math.sin(half))


def quat_from_axis_angle(axis: Sequence[float], angle_rad: float) -> Quat:
    ax, ay, az = axis
    n = math.sqrt(ax * ax + ay * ay + az * az)
    if n == 0.0:
        raise ValueError("rotation axis must be non-zero")
    s = math.sin(angle_rad / 2.0) / n
    return _qnormalize((math.cos(angle_rad / 2.0), ax * s, ay * s, az * s))


@dataclass(frozen=True)
class Pose:
    """Rigid transform expressed in a named session frame."""

    position: Vec3 = (0.0, 0.0, 0.0)
    orientation: Quat = (1.0, 0.0, 0.0, 0.0)
    frame: str = ""

    def __post_init__(self) -> None:
        pos = tuple(float(c) for c in self.position)
        quat = tuple(float(c) for c in self.orientation)
        if len(pos) != 3 or len(quat) != 4:
            raise ValueError("pose needs a 3-vector position and a (w,x,y,z) quaternion")
        if not all(math.isfinite(c) for c in pos + quat):
            raise ValueError(f"non-finite pose component: {pos} {quat}")
        norm = math.sqrt(sum(c * c for c in quat))
        if abs(norm - 1.0) > QUAT_TOL:
            raise ValueError(f"orientation is not a unit quaternion (norm {norm!r})")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "orientation", quat)

    @classmethod
    def identity(cls, frame: str = "") -> "Pose":
        return cls(frame=frame)

    @classmethod
    def from_xyz_yaw(cls, x: float, y: float, z: float = 0.0, yaw: float = 0.0, frame: str = "") -> "Pose":
        """Pose at ``(x, y, z)`` rotated ``yaw`` degrees counter-clockwise about up."""
        return cls((x, y, z), quat_from_yaw(yaw), frame)

    @classmethod
    def from_heading(cls, x: float, y: float, heading: float, z: float = 0.0, frame: str = "") -> "Pose":
        """Pose at ``(x, y, z)`` facing ``heading`` degrees clockwise from north."""
        return cls((x, y, z), quat_from_yaw(-heading), frame)

    @property
    def yaw(self) -> float:
        """Counter-clockwise rotation about ``+z`` in degrees, ``(-180, 180]``."""
        w, x, y, z = self.orientation
        return signed_deg(math.degrees(math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))))

    @property
    def heading(self) -> float:
        """Bearing of the forward (``+y``) axis, clockwise from north."""
        fx, fy, _ = _qrotate(self.orientation, (0.0, 1.0, 0.0))
        return normalize_deg(math.degrees(math.atan2(fx, fy)))

    @property
    def xy(self) -> Tuple[float, float]:
        return (self.position[0], self.position[1])

    def with_frame(self, frame: str) -> "Pose":
        return Pose(self.position, self.orientation, frame)

    def transform_point(self, point: Sequence[float]) -> Vec3:
        r = _qrotate(self.orientation, point)
        p = self.position
        return (p[0] + r[0], p[1] + r[1], p[2] + r[2])

    def distance_to(self, other: "Pose") -> float:
        return math.dist(self.position, other.position)


def translate(x: float, y: float, z: float = 0.0, frame: str = "") -> Pose:
    return Pose((x, y, z), frame=frame)


def compose(a: Pose, b: Pose) -> Pose:
    """Return ``a ∘ b``: ``b`` expressed in ``a``'s frame. Carries ``a.frame``."""
    pos = a.transform_point(b.position)
    quat = _qnormalize(_qmul(a.orientation, b.orientation))
    return Pose(pos, quat, a.frame)


def invert(p: Pose) -> Pose:
    w, x, y, z = p.orientation
    conj = (w, -x, -y, -z)
    r = _qrotate(conj, p.position)
    return Pose((-r[0], -r[1], -r[2]), conj, p.frame)


def rotation_angle_between(a: Pose, b: Pose) -> float:
    """Angle in radians of the rotation taking ``a``'s orientation to ``b``'s."""
    w, x, y, z = a.orientation
    r = _qmul((w, -x, -y, -z), b.orientation)
    # atan2 keeps precision near zero where acos of the dot product does not
    return 2.0 * math.atan2(math.sqrt(r[1] ** 2 + r[2] ** 2 + r[3] ** 2), abs(r[0]))


@dataclass(frozen=True)
class FrameTransform:
    """Maps poses expressed in ``from_frame`` into ``to_frame``."""

    from_frame: str
    to_frame: str
    transform: Pose = field(default_factory=Pose)

    def apply(self, pose: Pose) -> Pose:
        if pose.frame != self.from_frame:
            raise ValueError(f"pose is in frame {pose.frame!r}, transform expects {self.from_frame!r}")
        out = compose(self.transform, pose)
        return Pose(out.position, out.orientation, self.to_frame)

    def apply_point(self, point: Sequence[float]) -> Vec3:
        return self.transform.transform_point(point)

    def inverse(self) -> "FrameTransform":
        return FrameTransform(self.to_frame, self.from_frame, invert(self.transform))

    def then(self, outer: "FrameTransform") -> "FrameTransform":
        """Chain: first ``self`` then ``outer``."""
        return FrameTransform(self.from_frame, outer.to_frame, compose(outer.transform, self.transform))


def relative_transform(anchor_in_a: Pose, anchor_in_b: Pose) -> FrameTransform:
    """Transform taking frame B coordinates to frame A via one shared anchor.

    Both poses describe the same physical anchor, observed in session frames
    A and B respectively.
    """
    t = compose(anchor_in_a, invert(anchor_in_b))
    return FrameTransform(anchor_in_b.frame, anchor_in_a.frame, t.with_frame(anchor_in_a.frame))


@dataclass(frozen=True)
class GeoPose:
    latitude: float
    longitude: float
    altitude: float = 0.0
    yaw: float = 0.0
    ci_horizontal: float = 0.0
    ci_yaw: float = 0.0
    ci_vertical: float = 0.0

    def __post_init__(self) -> None:
        values = (
            self.latitude, self.longitude, self.altitude, self.yaw,
            self.ci_horizontal, self.ci_yaw, self.ci_vertical,
        )
        if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in values):
            raise ValueError(f"non-finite geo pose field in {values}")
        if not -90.0 <= self.latitude <= 90.0:
            raise GeoRangeError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude < 180.0:
            raise GeoRangeError(f"longitude {self.longitude} outside [-180, 180)")
        if not 0.0 <= self.yaw < 360.0:
            raise GeoRangeError(f"yaw {self.yaw} outside [0, 360)")
        if min(self.ci_horizontal, self.ci_yaw, self.ci_vertical) < 0.0:
            raise ValueError("confidence intervals must be non-negative")


def _wrap_lon(lon: float) -> float:
    return normalize_deg(lon + 180.0) - 180.0


def geo_to_local(g: GeoPose, origin: GeoPose, frame: str = "enu") -> Pose:
    """East-north-up pose of ``g`` relative to ``origin`` on a spherical Earth."""
    scale = EARTH_RADIUS * math.pi / 180.0
    dlon = signed_deg(g.longitude - origin.longitude)
    east = dlon * math.cos(math.radians(origin.latitude)) * scale
    north = (g.latitude - origin.latitude) * scale
    if math.hypot(east, north) > MAX_TANGENT_DISTANCE:
        raise GeoRangeError(
            f"point is {math.hypot(east, north):.0f} m from the origin; tangent plane valid to "
            f"{MAX_TANGENT_DISTANCE:.0f} m"
        )
    return Pose.from_heading(east, north, g.yaw, z=g.altitude - origin.altitude, frame=frame)


def local_to_geo(p: Pose, origin: GeoPose) -> GeoPose:
    """Inverse of :func:`geo_to_local`. Confidence fields come back zeroed."""
    east, north, up = p.position
    if math.hypot(east, north) > MAX_TANGENT_DISTANCE:
        raise GeoRangeError(f"local position {p.position} beyond {MAX_TANGENT_DISTANCE:.0f} m")
    scale = EARTH_RADIUS * math.pi / 180.0
    lat = origin.latitude + north / scale
    coslat = math.cos(math.radians(origin.latitude))
    if coslat < 1e-12:
        raise GeoRangeError("tangent plane undefined at the poles")
    lon = _wrap_lon(origin.longitude + east / (coslat * scale))
    return GeoPose(lat, lon, origin.altitude + up, p.heading)


def haversine(lat1: float, lon1: float, lat2: float, lon2: float, radius: float = EARTH_RADIUS) -> float:
    """Great-circle distance in meters."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2.0 * radius * math.asin(min(1.0, math.sqrt(h)))


def bearing(start: Sequence[float], end: Sequence[float]) -> float:
    """Clockwise angle from north (``+y``) of the vector ``start -> end``."""
    dx = end[0] - start[0]
    dy = end[1] - start[1]
    if dx == 0.0 and dy == 0.0:
        raise ValueError("bearing is undefined between coincident points")
    return normalize_deg(math.degrees(math.atan2(dx, dy)))
