"""End-to-end navigation simulations with a scripted walker.

Each scenario plans and stitches a route, treats the route's navigation
frame as ground truth, localizes the walker at the start anchor by panning,
and then walks by following guidance cues while the sensing layer injects
drift and relocalization noise.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .geom import Pose, bearing, compose, invert, signed_deg
from .guidance import (
    STRAIGHT,
    GuidanceState,
    distance_to_target,
    get_directions,
    guidance_update,
    is_on_track,
    start_guidance,
)
from .mapstore.io import canonical_dumps, load_map
from .mapstore.model import Anchor, ConnectionRecord, MapGraph
from .routing import UnreachableError, plan_route
from .sensim import SensingConfig, TrackingSession, World, step_odometry, try_relocalize

MAX_EVENTS = 10_000
START_PAN_LIMIT = 60.0
CONFIG_DIR_ENV = "ANCHORNAV_CONFIG_DIR"

# heading change a walker makes for each spoken turn kind
NOMINAL_TURN = {
    STRAIGHT: 0.0,
    "slight-left": -45.0,
    "left": -90.0,
    "sharp-left": -150.0,
    "slight-right": 45.0,
    "right": 90.0,
    "sharp-right": 150.0,
}


class ConfigError(ValueError):
    pass


def _turn_from_text(text: str) -> float:
    if text.startswith("Continue straight"):
        return 0.0
    if text.startswith("Turn "):
        kind = text[5:].split(" ", 1)[0]
        return NOMINAL_TURN.get(kind, 0.0)
    return 0.0


# --- seeded map generation -------------------------------------------------


def _densify(waypoints: Sequence[Sequence[float]], step: float = 0.25) -> List[np.ndarray]:
    pts = [np.asarray(waypoints[0], dtype=float)]
    for a, b in zip(waypoints, waypoints[1:]):
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        n = max(1, int(math.ceil(np.linalg.norm(b - a) / step)))
        for k in range(1, n + 1):
            pts.append(a + (b - a) * (k / n))
    return pts


def _trail_poses(points: Sequence[np.ndarray], to_session: Pose, frame: str) -> List[Pose]:
    out = []
    to_session = to_session.with_frame(frame)
    for i, p in enumerate(points):
        nxt = points[min(i + 1, len(points) - 1)]
        prv = points[max(i - 1, 0)]
        d = nxt - p if i + 1 < len(points) else p - prv
        h = bearing((0.0, 0.0), d[:2]) if np.hypot(d[0], d[1]) > 0 else 0.0
        world = Pose.from_heading(float(p[0]), float(p[1]), h, z=float(p[2]))
        out.append(compose(to_session, world))
    return out


def _waypoints(rng, a: np.ndarray, b: np.ndarray) -> List[np.ndarray]:
    style = rng.integers(3)
    if style == 0:
        return [a, b]
    if style == 1:
        return [a, np.array([b[0], a[1], 0.0]), b]
    return [a, np.array([a[0], b[1], 0.0]), b]


def random_map(
    seed: int,
    n_anchors: int = 6,
    extent: float = 40.0,
    extra_edge_prob: float = 0.3,
    reverse_prob: float = 0.3,
    min_separation: float = 6.0,
):
    """Seeded map whose every connection was recorded in its own session frame.

    Returns ``(graph, truth)`` with ``truth`` mapping anchor ids to world poses.
    Trails start and end exactly on their anchors.
    """
    rng = np.random.default_rng(seed)
    positions: List[np.ndarray] = []
    while len(positions) < n_anchors:
        p = np.array([rng.uniform(0, extent), rng.uniform(0, extent), 0.0])
        if all(np.linalg.norm(p - q) >= min_separation for q in positions):
            positions.append(p)
    ids = [f"a{i:02d}" for i in range(n_anchors)]
    truth = {aid: Pose.from_heading(float(p[0]), float(p[1]), float(rng.uniform(0, 360))) for aid, p in zip(ids, positions)}
    graph = MapGraph()
    for aid in ids:
        graph.add_anchor(Anchor(id=aid, name=f"Anchor {aid}", quality=1.0, created_at=0.0))
    pairs = [(int(rng.integers(i)), i) for i in range(1, n_anchors)]
    for i in range(n_anchors):
        for j in range(i + 1, n_anchors):
            if (i, j) not in pairs and rng.random() < extra_edge_prob:
                pairs.append((i, j))
    for n, (i, j) in enumerate(pairs):
        if rng.random() < 0.5:
            i, j = j, i
        a, b = positions[i], positions[j]
        frame = f"session-{n:03d}"
        origin = Pose.from_xyz_yaw(rng.uniform(-50, 50), rng.uniform(-50, 50), 0.0, rng.uniform(-180, 180))
        to_session = invert(origin)
        pts = _densify(_waypoints(rng, a, b))
        walked = sum(float(np.linalg.norm(q - p)) for p, q in zip(pts, pts[1:]))
        raw = _trail_poses(pts, to_session, frame)
        rev = None
        if rng.random() < reverse_prob:
            rev = tuple(_trail_poses(_densify(_waypoints(rng, b, a)), to_session, frame))
        cid = f"c{n:03d}"
        graph.add_connection(ConnectionRecord(
            from_anchor=ids[i],
            to_anchor=ids[j],
            raw_points=tuple(raw),
            from_pose=compose(to_session, truth[ids[i]]).with_frame(frame),
            to_pose=compose(to_session, truth[ids[j]]).with_frame(frame),
            path_anchor_ids=tuple(f"{cid}-pa{k}" for k in range(1, int(walked // 10) + 1)),
            reverse_points=rev,
            id=cid,
        ))
    return graph, truth


# --- walker --------------------------------------------------------------


@dataclass(frozen=True)
class WalkerParams:
    step: float = 0.5
    pace: float = 1.0  # m/s
    aim_resolution: float = 0.05  # degrees


@dataclass
class RunRecord:
    scenario: str
    start: str
    goal: str
    status: str
    route_length: float = 0.0
    events: int = 0
    final_distance: float = float("nan")
    success: bool = False

    def to_dict(self) -> dict:
        d = {
            "scenario": self.scenario,
            "start": self.start,
            "goal": self.goal,
            "status": self.status,
            "route_length": self.route_length,
            "events": self.events,
            "final_distance": None if math.isnan(self.final_distance) else self.final_distance,
            "success": self.success,
        }
        return d


def _cone_edge(state: GuidanceState, pose: Pose, inside: float, outside: float, tol: float) -> float:
    """Bisect for the heading where the on-track cue switches off."""
    while abs(outside - inside) > tol:
        mid = 0.5 * (inside + outside)
        if is_on_track(state, Pose.from_heading(pose.xy[0], pose.xy[1], mid, z=pose.position[2])):
            inside = mid
        else:
            outside = mid
    return inside


def aim(state: GuidanceState, pose: Pose, tol: float) -> float:
    """Heading a walker settles on by sweeping the phone across the on-track cue.

    Starts from the current heading (or the Get Directions turn when off
    track) and returns the middle of the cued heading range.
    """
    h = pose.heading
    if not is_on_track(state, pose):
        h = h + _turn_from_text(get_directions(state, pose))
        # the spoken turn is coarse; sweep outward until the cue sounds
        for k in range(37):
            probe = h + (5.0 * ((k + 1) // 2)) * (1 if k % 2 else -1)
            if is_on_track(state, Pose.from_heading(pose.xy[0], pose.xy[1], probe, z=pose.position[2])):
                h = probe
                break
        else:
            return h
    span = 180.0
    left = _cone_edge(state, pose, h, h - span, tol)
    right = _cone_edge(state, pose, h, h + span, tol)
    return 0.5 * (left + right)


def navigate(
    route,
    sensing: SensingConfig,
    rng: np.random.Generator,
    walker: WalkerParams = WalkerParams(),
    max_events: int = MAX_EVENTS,
    guidance_options: Optional[dict] = None,
):
    """Walk one stitched route. Returns ``(status, events, final_distance, state)``."""
    nav = route.frame
    start_truth = route.start_pose
    first_leg = route.polyline.points[min(1, len(route.polyline.points) - 1)]
    h0 = bearing(start_truth.xy, first_leg.xy) if first_leg.distance_to(start_truth) > 0 else 0.0
    # the walker starts on the start anchor, facing roughly down the first leg
    start = Pose.from_heading(start_truth.position[0], start_truth.position[1], h0 + float(rng.uniform(-20, 20)))
    world = World(sensing.seed, true_pose=start, rng=rng)
    for aid, pose in route.anchor_poses.items():
        world.place_anchor(aid, pose)
    session = TrackingSession(world, nav, sensing.drift, sensing.reloc, origin=Pose.identity())
    state = start_guidance(route, **(guidance_options or {}))
    events: List = []
    t = 0.0
    # positioning: pan at the start anchor until it localizes
    while try_relocalize(session, world, route.anchor_sequence[0], 1.0) is None:
        t += 1.0
        if t >= START_PAN_LIMIT:
            return "start_not_localized", events, world.true_pose.distance_to(route.goal_pose), state
    pending = [a for a in route.anchor_sequence[1:]]
    dt = walker.step / walker.pace
    goal_truth = route.goal_pose
    while len(events) < max_events:
        est = session.estimated_pose
        new = guidance_update(state, est, t)
        events.extend(new)
        if not state.active:
            # final approach: close the remaining displayed distance
            last = state.keypoints[-1].position
            d = math.dist(est.xy, last)
            if d > 1e-9:
                turn = signed_deg(bearing(est.xy, last) - est.heading)
                step_odometry(session, world, d, turn)
            return "arrived", events, world.true_pose.distance_to(goal_truth), state
        target = aim(state, est, walker.aim_resolution)
        turn = signed_deg(target - est.heading)
        dist = min(walker.step, distance_to_target(state, est))
        step_odometry(session, world, dist, turn)
        t += dt
        for aid in list(pending):
            if try_relocalize(session, world, aid, dt) is not None:
                pending.remove(aid)
    return "event_limit", events, world.true_pose.distance_to(goal_truth), state


# --- scenario runner -----------------------------------------------------


@dataclass
class SimulationReport:
    seed: int
    anchors: int
    connections: int
    runs: List[RunRecord] = field(default_factory=list)

    @property
    def success_rate(self) -> float:
        return sum(r.success for r in self.runs) / len(self.runs) if self.runs else 0.0

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "map": {"anchors": self.anchors, "connections": self.connections},
            "runs": [r.to_dict() for r in sorted(self.runs, key=lambda r: r.scenario)],
            "success_rate": self.success_rate,
        }

    def to_bytes(self) -> bytes:
        return canonical_dumps(self.to_dict())


def run_scenarios(
    graph: MapGraph,
    scenarios: Sequence[dict],
    sensing: SensingConfig,
    walker: WalkerParams = WalkerParams(),
    arrival_radius: float = 1.0,
    max_events: int = MAX_EVENTS,
    guidance_options: Optional[dict] = None,
    event_sink=None,
) -> SimulationReport:
    report = SimulationReport(sensing.seed, len(graph.anchors), len(graph.connections))
    ordered = sorted(scenarios, key=lambda s: str(s["id"]))
    streams = np.random.SeedSequence(sensing.seed).spawn(len(ordered))
    options = dict(guidance_options or {}, arrival_radius=arrival_radius)
    for sc, stream in zip(ordered, streams):
        rec = RunRecord(str(sc["id"]), sc["start"], sc["goal"], status="pending")
        try:
            route = plan_route(graph, sc["start"], sc["goal"])
        except UnreachableError:
            rec.status = "unreachable"
            report.runs.append(rec)
            continue
        except (KeyError, ValueError) as exc:
            rec.status = f"invalid: {exc}"
            report.runs.append(rec)
            continue
        rng = np.random.default_rng(stream)
        status, events, final, _ = navigate(route, sensing, rng, walker, max_events, options)
        rec.status = status
        rec.route_length = route.total_length
        rec.events = len(events)
        rec.final_distance = final
        rec.success = status == "arrived" and final <= arrival_radius
        if event_sink is not None:
            event_sink(rec.scenario, events)
        report.runs.append(rec)
    return report


def resolve_path(path: str, base_dir: Optional[str] = None) -> str:
    if os.path.isabs(path):
        return path
    root = os.environ.get(CONFIG_DIR_ENV) or base_dir or os.getcwd()
    return os.path.join(root, path)


def parse_config(cfg: dict, seed: Optional[int] = None):
    """Validate a simulate config; returns keyword arguments for :func:`run_scenarios`."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    allowed = {"seed", "map", "scenarios", "random_scenarios", "sensing", "noiseless", "walker",
               "arrival_radius", "max_events", "epsilon", "units"}
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        sensing_doc = dict(cfg.get("sensing", {}))
        if seed is not None:
            sensing_doc["seed"] = seed
        elif "seed" in cfg:
            sensing_doc["seed"] = cfg["seed"]
        sensing = SensingConfig.from_dict(sensing_doc)
        if cfg.get("noiseless"):
            sensing = SensingConfig.noiseless(sensing.seed)
        walker = WalkerParams(**cfg.get("walker", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if walker.step <= 0 or walker.pace <= 0:
        raise ConfigError("walker step and pace must be positive")
    guidance_options = {}
    if "epsilon" in cfg:
        guidance_options["epsilon"] = float(cfg["epsilon"])
    if "units" in cfg:
        if cfg["units"] not in ("meters", "feet"):
            raise ConfigError(f"unknown units {cfg['units']!r}")
        guidance_options["units"] = cfg["units"]
    return {
        "sensing": sensing,
        "walker": walker,
        "arrival_radius": float(cfg.get("arrival_radius", 1.0)),
        "max_events": int(cfg.get("max_events", MAX_EVENTS)),
        "guidance_options": guidance_options,
    }


def scenarios_from_config(cfg: dict, graph: MapGraph, seed: int) -> List[dict]:
    scenarios = list(cfg.get("scenarios", []))
    n_random = int(cfg.get("random_scenarios", 0))
    if n_random:
        rng = np.random.default_rng(seed)
        ids = sorted(graph.anchors)
        if len(ids) < 2:
            raise ConfigError("random scenarios need at least two anchors")
        for k in range(n_random):
            i, j = rng.choice(len(ids), size=2, replace=False)
            scenarios.append({"id": f"r{k:04d}", "start": ids[int(i)], "goal": ids[int(j)]})
    if not scenarios:
        raise ConfigError("config defines no scenarios")
    for sc in scenarios:
        if not {"id", "start", "goal"} <= set(sc):
            raise ConfigError(f"scenario needs id, start and goal: {sc}")
    ids = [str(s["id"]) for s in scenarios]
    if len(set(ids)) != len(ids):
        raise ConfigError("scenario ids must be unique")
    return scenarios


def run_simulation(cfg: dict, base_dir: Optional[str] = None, seed: Optional[int] = None, event_sink=None) -> SimulationReport:
    """Run every scenario of a simulate config dict."""
    kwargs = parse_config(cfg, seed)
    if "map" not in cfg:
        raise ConfigError("config must reference a map file")
    try:
        graph = load_map(resolve_path(cfg["map"], base_dir))
    except OSError as exc:
        raise ConfigError(f"cannot read map: {exc}") from exc
    scenarios = scenarios_from_config(cfg, graph, kwargs["sensing"].seed)
    return run_scenarios(graph, scenarios, event_sink=event_sink, **kwargs)
