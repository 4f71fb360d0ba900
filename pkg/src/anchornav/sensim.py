"""Seeded stand-ins for phone tracking, anchor relocalization and geo fixes.

All randomness flows from the single ``numpy.random.Generator`` owned by a
:class:`World`; nothing touches global random state. Ground truth lives in
the world frame, which doubles as an east-north-up frame around
``World.geo_origin``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Dict, Optional

import numpy as np

from .geom import GeoPose, Pose, compose, invert, local_to_geo, normalize_deg, quat_from_yaw

WORLD_FRAME = "world"


@dataclass(frozen=True)
class DriftParams:
    sigma_pos: float = 0.01  # m per sqrt(m) walked, per axis
    sigma_yaw: float = 0.1  # deg per sqrt(m) walked


@dataclass(frozen=True)
class RelocParams:
    radius: float = 4.0
    sigma: float = 0.05  # m, per axis
    p_success: float = 0.5  # per second while in range
    gate: float = 3.0  # solutions with |error| > gate * sigma are rejected


@dataclass(frozen=True)
class CIModel:
    ci0_horizontal: float = 10.0
    ci0_yaw: float = 25.0
    ci0_vertical: float = 15.0
    floor_horizontal: float = 1.0
    floor_yaw: float = 2.0
    floor_vertical: float = 1.5
    tau: float = 5.0

    def at(self, elapsed: float):
        decay = math.exp(-max(elapsed, 0.0) / self.tau)
        return (
            self.floor_horizontal + (self.ci0_horizontal - self.floor_horizontal) * decay,
            self.floor_yaw + (self.ci0_yaw - self.floor_yaw) * decay,
            self.floor_vertical + (self.ci0_vertical - self.floor_vertical) * decay,
        )


@dataclass(frozen=True)
class ConfidenceThresholds:
    horizontal: float = 2.0
    yaw: float = 5.0
    vertical: float = 3.0


@dataclass(frozen=True)
class SensingConfig:
    seed: int = 0
    drift: DriftParams = field(default_factory=DriftParams)
    reloc: RelocParams = field(default_factory=RelocParams)
    ci: CIModel = field(default_factory=CIModel)
    thresholds: ConfidenceThresholds = field(default_factory=ConfidenceThresholds)

    @classmethod
    def noiseless(cls, seed: int = 0) -> "SensingConfig":
        return cls(seed, DriftParams(0.0, 0.0), RelocParams(sigma=0.0, p_success=1.0))

    @classmethod
    def from_dict(cls, d: dict) -> "SensingConfig":
        known = {"seed", "drift", "reloc", "ci", "thresholds"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown sensing config keys: {sorted(unknown)}")
        seed = d.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
        return cls(
            seed=seed,
            drift=DriftParams(**d.get("drift", {})),
            reloc=RelocParams(**d.get("reloc", {})),
            ci=CIModel(**d.get("ci", {})),
            thresholds=ConfidenceThresholds(**d.get("thresholds", {})),
        )

    def to_dict(self) -> dict:
        return asdict(self)


class World:
    """Ground truth plus the one random generator for a simulation."""

    def __init__(
        self,
        seed: int = 0,
        true_pose: Optional[Pose] = None,
        geo_origin: Optional[GeoPose] = None,
        rng: Optional[np.random.Generator] = None,
    ) -> None:
        self.rng_seed = seed
        self.rng = rng if rng is not None else np.random.default_rng(seed)
        self.true_pose = (true_pose or Pose.identity()).with_frame(WORLD_FRAME)
        self.anchor_truth: Dict[str, Pose] = {}
        self.geo_origin = geo_origin or GeoPose(42.0, -71.0, 0.0)

    def place_anchor(self, anchor_id: str, pose: Pose) -> None:
        self.anchor_truth[anchor_id] = pose.with_frame(WORLD_FRAME)

    def geo_truth(self) -> GeoPose:
        return local_to_geo(self.true_pose, self.geo_origin)


class TrackingSession:
    """One phone tracking session with its own coordinate frame.

    The frame origin is wherever the phone stood when the session started.
    ``accumulated_drift`` is the transform taking the true pose (in session
    coordinates) to the estimate.
    """

    def __init__(
        self,
        world: World,
        frame: str,
        drift: DriftParams = DriftParams(),
        reloc: RelocParams = RelocParams(),
        origin: Optional[Pose] = None,
    ) -> None:
        self.session_frame = frame
        self.drift_params = drift
        self.reloc_params = reloc
        # world pose of the session origin
        self._origin = (origin or world.true_pose).with_frame(WORLD_FRAME)
        self._true = compose(invert(self._origin), world.true_pose).with_frame(frame)
        self.estimated_pose = self._true
        self.clock = 0.0

    @property
    def origin(self) -> Pose:
        """World pose of the session frame origin (ground truth)."""
        return self._origin

    @property
    def true_pose_in_session(self) -> Pose:
        return self._true

    @property
    def accumulated_drift(self) -> Pose:
        return compose(self.estimated_pose, invert(self._true))

    @property
    def position_error(self) -> float:
        return self.estimated_pose.distance_to(self._true)

    def to_session(self, world_pose: Pose) -> Pose:
        return compose(invert(self._origin), world_pose).with_frame(self.session_frame)


def _motion(distance: float, heading_change: float) -> Pose:
    # turn first (clockwise-positive heading change), then walk forward along +y
    rot = Pose(orientation=quat_from_yaw(-heading_change))
    return compose(rot, Pose((0.0, distance, 0.0)))


def step_odometry(session: TrackingSession, world: World, distance: float, heading_change: float = 0.0) -> Pose:
    """Advance truth by the commanded motion and the estimate by a noisy copy of it.

    Position noise is an isotropic Gaussian random walk with per-axis standard
    deviation ``sigma_pos * sqrt(distance)``; heading noise is
    ``sigma_yaw * sqrt(distance)`` degrees. Four normals are always drawn per
    step so the random stream does not depend on the noise settings.
    """
    if distance < 0.0 or not math.isfinite(distance):
        raise ValueError(f"distance must be non-negative, got {distance}")
    if not math.isfinite(heading_change):
        raise ValueError("heading change must be finite")
    motion = _motion(distance, heading_change)
    world.true_pose = compose(world.true_pose, motion)
    session._true = compose(session._true, motion)
    z = world.rng.standard_normal(4)
    scale = math.sqrt(distance)
    dp = session.drift_params
    yaw_noise = dp.sigma_yaw * scale * z[3]
    noisy = _motion(distance, heading_change + yaw_noise) if yaw_noise != 0.0 else motion
    est = compose(session.estimated_pose, noisy)
    if dp.sigma_pos > 0.0 and distance > 0.0:
        s = dp.sigma_pos * scale
        x, y, zz = est.position
        est = Pose((x + s * z[0], y + s * z[1], zz + s * z[2]), est.orientation, est.frame)
    session.estimated_pose = est
    return est


def gated_noise(rng: np.random.Generator, sigma: float, gate: float = 3.0) -> np.ndarray:
    """Isotropic 3-D Gaussian error, redrawn until its norm is within ``gate * sigma``."""
    while True:
        e = rng.standard_normal(3) * sigma
        if sigma == 0.0 or np.linalg.norm(e) <= gate * sigma:
            return e


def try_relocalize(session: TrackingSession, world: World, anchor_id: str, dt: float = 1.0) -> Optional[Pose]:
    """Attempt to recognize ``anchor_id`` for ``dt`` seconds.

    Returns the anchor's pose in the session frame (position perturbed by
    gated relocalization noise) or ``None``. On success the session estimate
    is snapped back so its pose relative to the anchor is exact; the residual
    error equals the observation error.
    """
    truth = world.anchor_truth[anchor_id]
    session.clock += dt
    if world.true_pose.distance_to(truth) > session.reloc_params.radius:
        return None
    rp = session.reloc_params
    p = 1.0 - (1.0 - rp.p_success) ** dt if dt > 0 else 0.0
    if world.rng.random() >= p:
        return None
    e = gated_noise(world.rng, rp.sigma, rp.gate)
    anchor_true = session.to_session(truth)
    observed = Pose(tuple(np.add(anchor_true.position, e)), anchor_true.orientation, session.session_frame)
    t = session._true
    session.estimated_pose = Pose(tuple(np.add(t.position, e)), t.orientation, session.session_frame)
    return observed


@dataclass(frozen=True)
class GeoFix:
    geo: GeoPose
    elapsed: float


def geospatial_fix(session: TrackingSession, world: World, elapsed: float, model: CIModel = CIModel()) -> GeoFix:
    """Geo pose estimate whose error is drawn at half the current interval width."""
    ci_h, ci_yaw, ci_v = model.at(elapsed)
    truth = world.geo_truth()
    z = world.rng.standard_normal(4)
    # interval read as ~95%, so sigma = ci / 2
    east, north = z[0] * ci_h / 2.0, z[1] * ci_h / 2.0
    x, y, up = world.true_pose.position
    noisy = Pose((x + east, y + north, up + z[2] * ci_v / 2.0), world.true_pose.orientation, WORLD_FRAME)
    g = local_to_geo(noisy, world.geo_origin)
    yaw = normalize_deg(truth.yaw + z[3] * ci_yaw / 2.0)
    geo = GeoPose(g.latitude, g.longitude, g.altitude, yaw, ci_h, ci_yaw, ci_v)
    return GeoFix(geo, elapsed)


def is_confident(fix: GeoFix, thresholds: ConfidenceThresholds = ConfidenceThresholds()) -> bool:
    g = fix.geo
    return (
        g.ci_horizontal <= thresholds.horizontal
        and g.ci_yaw <= thresholds.yaw
        and g.ci_vertical <= thresholds.vertical
    )
