"""Turn-by-turn guidance along a stitched route.

The engine consumes estimated poses and emits :class:`GuidanceEvent` values;
rendering them as audio, speech or vibration is left to the caller.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .geom import Pose, bearing, signed_deg

STRAIGHT = "straight"
ARRIVE = "arrive"
TURN_KINDS = (STRAIGHT, "slight-left", "left", "sharp-left", "slight-right", "right", "sharp-right", ARRIVE)

DEFAULT_EPSILON = 0.5
ARRIVAL_RADIUS = 1.0
HAPTIC_FAR = 5.0
ON_TRACK_TOLERANCE = 30.0
CUE_INTERVAL = 2.0
OFF_TRACK_AFTER = 5.0
FEET_PER_METER = 1.0 / 0.3048


@dataclass(frozen=True)
class Keypoint:
    position: Tuple[float, float]
    turn: str
    distance_to_next: float

    def __post_init__(self) -> None:
        if self.turn not in TURN_KINDS:
            raise ValueError(f"unknown turn kind {self.turn!r}")
        if self.turn != ARRIVE and not self.distance_to_next > 0.0:
            raise ValueError("only the arrive keypoint may have zero distance to next")


@dataclass(frozen=True)
class GuidanceEvent:
    kind: str
    t: float = 0.0
    haptic_level: float = 0.0
    text: Optional[str] = None

    def to_dict(self) -> dict:
        return {"t": self.t, "kind": self.kind, "level": self.haptic_level, "text": self.text}


def rdp(points: np.ndarray, epsilon: float) -> List[int]:
    """Indices kept by Ramer-Douglas-Peucker simplification (distance to segment)."""
    n = len(points)
    if n < 3:
        return list(range(n))
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        lo, hi = stack.pop()
        if hi - lo < 2:
            continue
        d = _segment_distances(points[lo + 1:hi], points[lo], points[hi])
        k = int(np.argmax(d))
        if d[k] > epsilon:
            mid = lo + 1 + k
            keep[mid] = True
            stack.append((lo, mid))
            stack.append((mid, hi))
    return [int(i) for i in np.flatnonzero(keep)]


def _segment_distances(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(pts - a, axis=1)
    t = np.clip((pts - a) @ ab / denom, 0.0, 1.0)
    return np.linalg.norm(pts - (a + t[:, None] * ab), axis=1)


def classify_turn(heading_change: float) -> str:
    """Bucket a signed heading change; negative is left, exactly 180 counts as right."""
    d = signed_deg(heading_change)
    mag = abs(d)
    if mag < 30.0:
        return STRAIGHT
    side = "left" if d < 0 else "right"
    if mag < 60.0:
        return f"slight-{side}"
    if mag <= 120.0:
        return side
    return f"sharp-{side}"


def extract_keypoints(polyline, epsilon: float = DEFAULT_EPSILON) -> List[Keypoint]:
    """Simplified route vertices, each tagged with the turn taken there.

    The start vertex is not a keypoint; the last one is ``arrive``.
    """
    if not epsilon > 0.0:
        raise ValueError("epsilon must be positive")
    pts = polyline.points if hasattr(polyline, "points") else polyline
    xy = np.array([p.xy if isinstance(p, Pose) else (p[0], p[1]) for p in pts], dtype=float)
    if len(xy) < 2:
        raise ValueError("a polyline needs at least 2 points")
    kept = rdp(xy, epsilon)
    verts = [xy[i] for i in kept]
    # coincident neighbours carry no direction
    clean = [verts[0]]
    for v in verts[1:]:
        if np.linalg.norm(v - clean[-1]) > 1e-9:
            clean.append(v)
    if len(clean) < 2:
        raise ValueError("degenerate polyline: start and end coincide")
    keypoints = []
    for i in range(1, len(clean)):
        here = (float(clean[i][0]), float(clean[i][1]))
        if i == len(clean) - 1:
            keypoints.append(Keypoint(here, ARRIVE, 0.0))
            continue
        incoming = bearing(clean[i - 1], clean[i])
        outgoing = bearing(clean[i], clean[i + 1])
        dist = float(np.linalg.norm(clean[i + 1] - clean[i]))
        keypoints.append(Keypoint(here, classify_turn(outgoing - incoming), dist))
    return keypoints


def haptic_level(distance: float, arrival_radius: float = ARRIVAL_RADIUS, far: float = HAPTIC_FAR) -> float:
    """Vibration intensity: 0 beyond ``far``, rising linearly to 1 at ``arrival_radius``."""
    if distance < 0:
        raise ValueError("distance must be non-negative")
    if distance >= far:
        return 0.0
    if distance <= arrival_radius:
        return 1.0
    return (far - distance) / (far - arrival_radius)


def format_distance(meters: float, units: str = "meters") -> str:
    if units == "meters":
        value, label = meters, "meters"
    elif units == "feet":
        value, label = meters * FEET_PER_METER, "feet"
    else:
        raise ValueError(f"unknown units {units!r}")
    n = int(round(value))
    if n == 1:
        label = label[:-1] if label == "meters" else "foot"
    return f"{n} {label}"


def instruction_text(turn: str, distance: float, units: str = "meters") -> str:
    if turn == ARRIVE:
        return "You have arrived"
    d = format_distance(distance, units)
    if turn == STRAIGHT:
        return f"Continue straight and proceed {d}"
    return f"Turn {turn} and proceed {d}"


@dataclass
class GuidanceState:
    keypoints: List[Keypoint]
    route: object = None
    current_index: int = 0
    arrival_radius: float = ARRIVAL_RADIUS
    on_track_tolerance: float = ON_TRACK_TOLERANCE
    cue_interval: float = CUE_INTERVAL
    off_track_after: float = OFF_TRACK_AFTER
    units: str = "meters"
    last_cue: Optional[float] = None
    off_since: Optional[float] = None
    off_reported: bool = False
    log: List[GuidanceEvent] = field(default_factory=list)

    @property
    def active(self) -> bool:
        return self.current_index < len(self.keypoints)

    @property
    def target(self) -> Optional[Keypoint]:
        return self.keypoints[self.current_index] if self.active else None


def start_guidance(route, epsilon: float = DEFAULT_EPSILON, **options) -> GuidanceState:
    return GuidanceState(keypoints=extract_keypoints(route.polyline, epsilon), route=route, **options)


def relative_bearing(state: GuidanceState, pose: Pose) -> Optional[float]:
    """Signed angle from the user's heading to the current keypoint, or None on top of it."""
    kp = state.target
    if kp is None or math.dist(pose.xy, kp.position) == 0.0:
        return None
    return signed_deg(bearing(pose.xy, kp.position) - pose.heading)


def is_on_track(state: GuidanceState, pose: Pose) -> bool:
    rel = relative_bearing(state, pose)
    return rel is not None and abs(rel) <= state.on_track_tolerance


def distance_to_target(state: GuidanceState, pose: Pose) -> float:
    kp = state.target
    return 0.0 if kp is None else math.dist(pose.xy, kp.position)


def _emit(state: GuidanceState, out: List[GuidanceEvent], ev: GuidanceEvent) -> None:
    out.append(ev)
    state.log.append(ev)


def guidance_update(state: GuidanceState, pose: Pose, t: float = 0.0) -> List[GuidanceEvent]:
    """Process one estimated pose at simulated time ``t``."""
    out: List[GuidanceEvent] = []
    if not state.active:
        return out
    kp = state.target
    d = math.dist(pose.xy, kp.position)
    if d <= state.arrival_radius:
        _emit(state, out, GuidanceEvent("haptic", t, 1.0))
        state.current_index += 1
        state.last_cue = None
        state.off_since = None
        state.off_reported = False
        if kp.turn == ARRIVE:
            _emit(state, out, GuidanceEvent("arrival", t, 1.0, instruction_text(ARRIVE, 0.0)))
        else:
            _emit(state, out, GuidanceEvent("instruction", t, 1.0, instruction_text(kp.turn, kp.distance_to_next, state.units)))
        return out
    level = haptic_level(d, state.arrival_radius)
    if is_on_track(state, pose):
        state.off_since = None
        state.off_reported = False
        if state.last_cue is None or t - state.last_cue >= state.cue_interval:
            state.last_cue = t
            _emit(state, out, GuidanceEvent("on_track_cue", t, level))
    else:
        if state.off_since is None:
            state.off_since = t
        elif not state.off_reported and t - state.off_since > state.off_track_after:
            state.off_reported = True
            _emit(state, out, GuidanceEvent("off_track", t, level))
    _emit(state, out, GuidanceEvent("haptic", t, level))
    return out


def get_directions(state: GuidanceState, pose: Pose, t: float = 0.0) -> str:
    """Spoken recovery instruction toward the current keypoint.

    Standing on the keypoint hands over to :func:`guidance_update`, which
    advances and returns the next leg's instruction.
    """
    if not state.active:
        return instruction_text(ARRIVE, 0.0)
    rel = relative_bearing(state, pose)
    if rel is None or distance_to_target(state, pose) <= state.arrival_radius:
        for ev in guidance_update(state, pose, t):
            if ev.text is not None:
                return ev.text
        return instruction_text(ARRIVE, 0.0)
    return instruction_text(classify_turn(rel), distance_to_target(state, pose), state.units)


def write_event_log(events: Sequence[GuidanceEvent], fh, **extra) -> None:
    """Append events as line-delimited canonical JSON records."""
    for ev in events:
        rec = dict(ev.to_dict(), **extra)
        fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


def read_event_log(fh) -> List[dict]:
    return [json.loads(line) for line in fh if line.strip()]
