"""Mapping workflows: anchor scans, connection recording and their variants.

Every workflow is transactional. It assembles its result off to the side
and touches the map only once everything has succeeded, so a failure leaves
the map exactly as it was.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

from .geom import GeoPose, Pose, compose, invert, relative_transform, signed_deg
from .mapstore.model import INDOOR, OUTDOOR, Anchor, ConnectionRecord, MapGraph
from .mapstore.trail import DEFAULT_SPACING
from .sensim import (
    CIModel,
    ConfidenceThresholds,
    TrackingSession,
    World,
    geospatial_fix,
    is_confident,
    step_odometry,
    try_relocalize,
)

MIN_SCAN_SECONDS = 30.0
PATH_ANCHOR_INTERVAL = 10.0
START_LOCALIZATION_TIMEOUT = 60.0
GEO_CONFIDENCE_TIMEOUT = 120.0

SWEEP_PROMPT = "Perform a 360-degree sweep with your phone"
STEP_BACK_PROMPT = "Take a step back and do a second sweep"
_PROMPTS = ((0.0, 1.0, SWEEP_PROMPT), (15.0, 16.0, STEP_BACK_PROMPT))


class WorkflowError(RuntimeError):
    """A mapping workflow could not complete; the map was not modified."""


class ScanTooShortError(WorkflowError):
    pass


class IncompleteConnectionError(WorkflowError):
    pass


class LocalizationTimeout(WorkflowError):
    pass


def prompt_at(t: float) -> Optional[str]:
    """Timed coaching prompt during an anchor scan, if one is due at ``t`` seconds."""
    if t < 0:
        raise ValueError("scan time must be non-negative")
    for lo, hi, text in _PROMPTS:
        if lo <= t < hi:
            return text
    return None


@dataclass(frozen=True)
class ScanTrace:
    """Timed phone poses covering an anchor scan."""

    samples: Tuple[Tuple[Pose, float], ...]

    def __post_init__(self) -> None:
        samples = tuple(self.samples)
        object.__setattr__(self, "samples", samples)
        if not samples:
            raise ValueError("a scan needs at least one sample")
        times = [t for _, t in samples]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("scan timestamps must be strictly increasing")

    @property
    def duration(self) -> float:
        return self.samples[-1][1] - self.samples[0][1]

    @property
    def start_pose(self) -> Pose:
        return self.samples[0][0]


def angular_coverage(scan: ScanTrace) -> float:
    """Fraction of a full turn swept by the phone heading, in [0, 1]."""
    unwrapped = [0.0]
    prev = scan.samples[0][0].heading
    for pose, _ in scan.samples[1:]:
        h = pose.heading
        unwrapped.append(unwrapped[-1] + signed_deg(h - prev))
        prev = h
    return min(1.0, (max(unwrapped) - min(unwrapped)) / 360.0)


def baseline(scan: ScanTrace) -> float:
    """Largest displacement of the phone from where the scan began."""
    origin = scan.start_pose
    return max(origin.distance_to(p) for p, _ in scan.samples)


def scan_quality(scan: ScanTrace) -> float:
    # rounded so the same physical scan scores identically in any session frame
    return round(0.5 * (angular_coverage(scan) + min(1.0, baseline(scan))), 9)


def _check_scan(scan: ScanTrace) -> None:
    if scan.duration < MIN_SCAN_SECONDS:
        raise ScanTooShortError(
            f"anchor scans need {MIN_SCAN_SECONDS:.0f} s of visual-inertial data, got {scan.duration:.1f} s"
        )


def create_anchor(
    session: TrackingSession,
    scan: ScanTrace,
    name: str = "",
    notes: str = "",
    *,
    anchor_id: str,
    kind: str = INDOOR,
    geo: Optional[GeoPose] = None,
    world: Optional[World] = None,
) -> Anchor:
    """Turn a scan into an anchor placed where the scan started.

    The anchor gets its own frame in which it sits at the identity; its pose
    in the session frame is ``scan.start_pose``. With a ``world`` the
    anchor's true pose is registered for later relocalization.
    """
    _check_scan(scan)
    anchor = Anchor(
        id=anchor_id,
        kind=kind,
        geo=geo,
        quality=scan_quality(scan),
        name=name,
        notes=notes,
        created_at=session.clock + scan.samples[-1][1],
    )
    if world is not None:
        world.place_anchor(anchor_id, world_pose_of(session, scan.start_pose, world))
    return anchor


def world_pose_of(session: TrackingSession, estimated: Pose, world: World) -> Pose:
    """True world pose where the phone actually was when it believed it was at ``estimated``."""
    truth_from_est = compose(session.true_pose_in_session, invert(session.estimated_pose))
    true_in_session = compose(truth_from_est, estimated)
    return compose(session.origin, true_in_session).with_frame("world")


def simulate_scan(
    session: TrackingSession,
    duration: float = MIN_SCAN_SECONDS,
    sweep: float = 360.0,
    translation: float = 1.0,
    rate: float = 2.0,
) -> ScanTrace:
    """Scripted scan: the phone turns through ``sweep`` degrees while sliding
    ``translation`` meters sideways and back. The tracking session itself is
    left where it was."""
    n = max(2, int(round(duration * rate)) + 1)
    start = session.estimated_pose
    samples = []
    for k in range(n):
        u = k / (n - 1)
        shift = translation * math.sin(math.pi * u)
        offset = Pose.from_heading(shift, 0.0, sweep * u)
        samples.append((compose(start, offset), u * duration))
    return ScanTrace(tuple(samples))


class RecorderState(enum.Enum):
    SELECT_START = "SelectStart"
    LOCALIZING_START = "LocalizingStart"
    RECORDING = "Recording"
    END_LOCALIZED = "EndLocalized"
    DONE = "Done"
    AWAIT_REVERSE_DECISION = "AwaitReverseDecision"


@dataclass(frozen=True)
class WalkEvent:
    """One entry of a walk trace: ``pan`` (stand and look), ``move`` or ``stop``."""

    kind: str
    dt: float = 1.0
    distance: float = 0.0
    turn: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("pan", "move", "stop"):
            raise ValueError(f"unknown walk event kind {self.kind!r}")
        if self.dt < 0 or self.distance < 0:
            raise ValueError("walk events need non-negative dt and distance")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dt": self.dt, "distance": self.distance, "turn": self.turn}

    @classmethod
    def from_dict(cls, d: dict) -> "WalkEvent":
        return cls(d["kind"], float(d.get("dt", 1.0)), float(d.get("distance", 0.0)), float(d.get("turn", 0.0)))


def straight_walk(distance: float, step: float = 1.0, pace: float = 1.0) -> List[WalkEvent]:
    """Events for one pan at the start, a straight walk, then stop."""
    events = [WalkEvent("pan")]
    left = distance
    while left > 1e-12:
        d = min(step, left)
        events.append(WalkEvent("move", d / pace, d))
        left -= d
    events.append(WalkEvent("stop", 0.0))
    return events


@dataclass
class ConnectionRecorder:
    """State machine for recording a connection between two anchors.

    ``to_anchor=None`` records toward a spot where a new anchor will be
    created (the streamlined variant); the end is then closed with
    :meth:`finish_at_new_anchor` instead of waiting for relocalization.
    """

    from_anchor: str
    to_anchor: Optional[str]
    spacing: float = DEFAULT_SPACING
    path_anchor_interval: float = PATH_ANCHOR_INTERVAL
    start_timeout: float = START_LOCALIZATION_TIMEOUT
    connection_id: Optional[str] = None
    state: RecorderState = RecorderState.SELECT_START
    raw: List[Pose] = field(default_factory=list)
    from_pose: Optional[Pose] = None
    to_pose: Optional[Pose] = None
    path_anchor_ids: List[str] = field(default_factory=list)
    walked: float = 0.0
    waited: float = 0.0
    record: Optional[ConnectionRecord] = None

    def __post_init__(self) -> None:
        if self.from_anchor == self.to_anchor:
            raise WorkflowError(f"cannot connect anchor {self.from_anchor!r} to itself")

    def _crumb(self, session: TrackingSession) -> None:
        self.raw.append(session.estimated_pose)

    def _advance(self, state: RecorderState) -> None:
        self.state = state

    def feed(self, session: TrackingSession, world: World, event: WalkEvent) -> None:
        st = self.state
        if st in (RecorderState.DONE, RecorderState.AWAIT_REVERSE_DECISION):
            raise WorkflowError(f"recorder is finished ({st.value}); no more walk events")
        if st == RecorderState.SELECT_START:
            self._advance(RecorderState.LOCALIZING_START)
            st = self.state
        if st == RecorderState.LOCALIZING_START:
            if event.kind == "move":
                raise WorkflowError("walking before the start anchor has localized")
            if event.kind == "stop":
                raise IncompleteConnectionError("stopped before the start anchor localized")
            self.waited += event.dt
            seen = try_relocalize(session, world, self.from_anchor, event.dt)
            if seen is not None:
                self.from_pose = seen
                self._crumb(session)
                self._advance(RecorderState.RECORDING)
            elif self.waited >= self.start_timeout:
                raise LocalizationTimeout(
                    f"anchor {self.from_anchor!r} did not localize within {self.start_timeout:.0f} s"
                )
            return
        # RECORDING or END_LOCALIZED
        if event.kind == "stop":
            if self.to_anchor is not None:
                self._close()
            return
        if event.kind == "move":
            before = self.walked
            step_odometry(session, world, event.distance, event.turn)
            self.walked += event.distance
            self._crumb(session)
            k0 = math.floor(before / self.path_anchor_interval + 1e-9)
            k1 = math.floor(self.walked / self.path_anchor_interval + 1e-9)
            for k in range(k0 + 1, k1 + 1):
                self.path_anchor_ids.append(f"{self._cid_hint()}-pa{k}")
        if self.to_anchor is not None and self.state == RecorderState.RECORDING:
            seen = try_relocalize(session, world, self.to_anchor, event.dt)
            if seen is not None:
                self.to_pose = seen
                # the estimate just snapped; keep the trail consistent with it
                self._crumb(session)
                self._advance(RecorderState.END_LOCALIZED)

    def _cid_hint(self) -> str:
        return self.connection_id or f"{self.from_anchor}->{self.to_anchor or 'new'}"

    def _close(self) -> None:
        if self.state != RecorderState.END_LOCALIZED:
            raise IncompleteConnectionError(
                f"stopped before anchor {self.to_anchor!r} localized; nothing was saved"
            )
        self.record = self._build_record(self.to_anchor, self.to_pose)
        self._advance(RecorderState.DONE)

    def _build_record(self, to_anchor: str, to_pose: Pose) -> ConnectionRecord:
        raw = _dedupe(self.raw)
        if len(raw) < 2:
            raise IncompleteConnectionError("no breadcrumbs were recorded")
        return ConnectionRecord(
            from_anchor=self.from_anchor,
            to_anchor=to_anchor,
            raw_points=tuple(raw),
            from_pose=self.from_pose,
            to_pose=to_pose,
            path_anchor_ids=tuple(self.path_anchor_ids),
            spacing=self.spacing,
            id=self.connection_id,
        )

    def finish_at_new_anchor(self, anchor: Anchor, placement: Pose) -> ConnectionRecord:
        if self.to_anchor is not None:
            raise WorkflowError("recorder already targets an existing anchor")
        if self.state != RecorderState.RECORDING:
            raise IncompleteConnectionError(f"cannot close the connection from state {self.state.value}")
        self.to_anchor = anchor.id
        self.record = self._build_record(anchor.id, placement)
        self._advance(RecorderState.DONE)
        return self.record

    def offer_reverse(self, graph: MapGraph, connection_id: str) -> None:
        """Step 4: ask about the reverse path when none is on file."""
        if self.state != RecorderState.DONE:
            raise WorkflowError("reverse recording is offered only after the connection is done")
        if graph.connections[connection_id].reverse_trail is None:
            self._advance(RecorderState.AWAIT_REVERSE_DECISION)

    def decline_reverse(self) -> None:
        if self.state != RecorderState.AWAIT_REVERSE_DECISION:
            raise WorkflowError("no reverse decision is pending")
        self._advance(RecorderState.DONE)


def _dedupe(points: Sequence[Pose]) -> List[Pose]:
    out: List[Pose] = []
    for p in points:
        if out and out[-1].position == p.position:
            out[-1] = p
        else:
            out.append(p)
    return out


def _run(recorder: ConnectionRecorder, session: TrackingSession, world: World, events: Iterable[WalkEvent]) -> None:
    for ev in events:
        recorder.feed(session, world, ev)
        if recorder.state == RecorderState.DONE:
            return


def connect_anchors(
    recorder: ConnectionRecorder,
    session: TrackingSession,
    world: World,
    graph: MapGraph,
    events: Iterable[WalkEvent],
) -> str:
    """Record a connection by replaying ``events`` and commit it.

    Returns the new connection id. Afterwards the recorder sits in
    ``AwaitReverseDecision`` when the connection has no reverse trail.
    """
    for end in (recorder.from_anchor, recorder.to_anchor):
        if end not in graph.anchors:
            raise WorkflowError(f"anchor {end!r} is not in the map")
    _run(recorder, session, world, events)
    if recorder.state != RecorderState.DONE:
        raise IncompleteConnectionError(
            f"walk ended in state {recorder.state.value} before the connection was complete"
        )
    trial = graph.copy()
    try:
        cid = trial.add_connection(recorder.record)
    except ValueError as exc:
        raise WorkflowError(f"connection rejected: {exc}") from exc
    graph.replace_with(trial)
    recorder.offer_reverse(graph, cid)
    return cid


def record_reverse(
    recorder: ConnectionRecorder,
    session: TrackingSession,
    world: World,
    graph: MapGraph,
    connection_id: str,
    events: Iterable[WalkEvent],
) -> None:
    """Resolve a pending reverse decision by walking B -> A in ``session``.

    The reverse trail is re-expressed in the forward trail's frame through
    the shared start anchor before it is stored.
    """
    if recorder.state != RecorderState.AWAIT_REVERSE_DECISION:
        raise WorkflowError("no reverse decision is pending")
    conn = graph.connections[connection_id]
    back = ConnectionRecorder(conn.to_anchor, conn.from_anchor, spacing=recorder.spacing)
    _run(back, session, world, events)
    if back.state != RecorderState.DONE:
        raise IncompleteConnectionError("reverse walk ended before anchor A localized")
    align = relative_transform(conn.to_pose_in_trail_frame, back.record.from_pose)
    points = [align.apply(p) for p in back.record.raw_points]
    trial = graph.copy()
    try:
        trial.set_reverse_trail(connection_id, points)
    except ValueError as exc:
        raise WorkflowError(f"reverse trail rejected: {exc}") from exc
    graph.replace_with(trial)
    recorder._advance(RecorderState.DONE)


def streamlined_extend(
    session: TrackingSession,
    world: World,
    graph: MapGraph,
    from_anchor: str,
    events: Iterable[WalkEvent],
    end_scan: Union[ScanTrace, Callable[[TrackingSession], ScanTrace]],
    *,
    anchor_id: str,
    name: str = "",
    notes: str = "",
    connection_id: Optional[str] = None,
    spacing: float = DEFAULT_SPACING,
) -> Tuple[str, str]:
    """Localize at ``from_anchor``, walk, and create a new anchor at the end.

    Equivalent to walking with a :class:`ConnectionRecorder`, calling
    :func:`create_anchor` on the end scan and committing the connection, but
    all-or-nothing: on any failure neither the anchor nor the connection is
    written. ``end_scan`` may be a callable taking the session, invoked once
    the walk has ended so the scan is made where the walker stands.
    """
    if from_anchor not in graph.anchors:
        raise WorkflowError(f"anchor {from_anchor!r} is not in the map")
    if anchor_id in graph.anchors:
        raise WorkflowError(f"anchor id {anchor_id!r} already in use")
    if isinstance(end_scan, ScanTrace):
        _check_scan(end_scan)
    recorder = ConnectionRecorder(from_anchor, None, spacing=spacing, connection_id=connection_id)
    _run(recorder, session, world, events)
    if recorder.state != RecorderState.RECORDING:
        raise IncompleteConnectionError(f"walk ended in state {recorder.state.value}")
    if not isinstance(end_scan, ScanTrace):
        end_scan = end_scan(session)
        _check_scan(end_scan)
    anchor = create_anchor(session, end_scan, name, notes, anchor_id=anchor_id)
    record = recorder.finish_at_new_anchor(anchor, end_scan.start_pose)
    trial = graph.copy()
    try:
        trial.add_anchor(anchor)
        cid = trial.add_connection(record)
    except ValueError as exc:
        raise WorkflowError(f"extension rejected: {exc}") from exc
    world.place_anchor(anchor_id, world_pose_of(session, end_scan.start_pose, world))
    graph.replace_with(trial)
    return anchor.id, cid


def create_outdoor_anchor(
    session: TrackingSession,
    world: World,
    scan_factory,
    name: str = "",
    notes: str = "",
    *,
    anchor_id: str,
    ci_model: CIModel = CIModel(),
    thresholds: ConfidenceThresholds = ConfidenceThresholds(),
    poll_interval: float = 0.5,
    timeout: float = GEO_CONFIDENCE_TIMEOUT,
) -> Tuple[Anchor, float]:
    """Geo-localize until confident, then run the regular anchor scan.

    ``scan_factory(session)`` produces the scan once the geo pose is fixed.
    Returns the anchor and the elapsed geo-localization time in seconds.
    """
    t = 0.0
    while True:
        fix = geospatial_fix(session, world, t, ci_model)
        if is_confident(fix, thresholds):
            break
        t += poll_interval
        if t > timeout + 1e-9:
            raise LocalizationTimeout(f"geo confidence not reached within {timeout:.0f} s")
    scan = scan_factory(session)
    anchor = create_anchor(
        session, scan, name, notes, anchor_id=anchor_id, kind=OUTDOOR, geo=fix.geo, world=world
    )
    return anchor, t
