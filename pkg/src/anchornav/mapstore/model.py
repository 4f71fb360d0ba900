"""Anchors, connections and the shareable map graph."""

from __future__ import annotations

import copy
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from ..geom import GeoPose, Pose, haversine
from .trail import DEFAULT_SPACING, BreadcrumbTrail, path_length, resample_trail

FORMAT_VERSION = 1
INDOOR = "indoor"
OUTDOOR = "outdoor"
FORWARD = "forward"
REVERSE = "reverse"

# how far the first crumb may sit from the start anchor
START_TOLERANCE = 0.5
# end anchors localize early, so the last crumb may stop short by this much
DEFAULT_RELOC_RADIUS = 4.0
LENGTH_TOL = 1e-6


class MapError(ValueError):
    """Rejected map mutation or map invariant violation."""


@dataclass(frozen=True)
class Anchor:
    id: str
    kind: str = INDOOR
    frame: str = ""
    geo: Optional[GeoPose] = None
    quality: float = 0.0
    name: str = ""
    notes: str = ""
    created_at: float = field(default_factory=time.time, compare=False)
    reference_pose: Pose = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if not self.id:
            raise MapError("anchor id must be non-empty")
        if self.kind not in (INDOOR, OUTDOOR):
            raise MapError(f"anchor {self.id}: unknown kind {self.kind!r}")
        if self.kind == OUTDOOR and self.geo is None:
            raise MapError(f"anchor {self.id}: outdoor anchors need a geo pose")
        if self.kind == INDOOR and self.geo is not None:
            raise MapError(f"anchor {self.id}: indoor anchors carry no geo pose")
        if not (0.0 <= self.quality <= 1.0):
            raise MapError(f"anchor {self.id}: quality {self.quality} outside [0, 1]")
        frame = self.frame or f"anchor:{self.id}"
        object.__setattr__(self, "frame", frame)
        ref = self.reference_pose
        if ref is None:
            ref = Pose.identity(frame)
        if ref != Pose.identity(frame):
            raise MapError(f"anchor {self.id}: reference pose must be the identity in its own frame")
        object.__setattr__(self, "reference_pose", ref)


@dataclass(frozen=True)
class ConnectionRecord:
    """Raw output of a connection workflow, before it is committed to a map."""

    from_anchor: str
    to_anchor: str
    raw_points: Tuple[Pose, ...]
    from_pose: Pose
    to_pose: Pose
    path_anchor_ids: Tuple[str, ...] = ()
    spacing: float = DEFAULT_SPACING
    reverse_points: Optional[Tuple[Pose, ...]] = None
    id: Optional[str] = None


@dataclass(frozen=True)
class Connection:
    id: str
    from_anchor: str
    to_anchor: str
    forward_trail: BreadcrumbTrail
    from_pose_in_trail_frame: Pose
    to_pose_in_trail_frame: Pose
    reverse_trail: Optional[BreadcrumbTrail] = None
    path_anchor_ids: Tuple[str, ...] = ()
    length: float = float("nan")
    reloc_radius: float = field(default=DEFAULT_RELOC_RADIUS, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "path_anchor_ids", tuple(self.path_anchor_ids))
        if math.isnan(self.length):
            object.__setattr__(self, "length", path_length(self.forward_trail))
        check_connection(self, self.reloc_radius)

    def trail(self, direction: str) -> BreadcrumbTrail:
        """Trail walked in ``direction``; falls back to the reversed forward trail."""
        if direction == FORWARD:
            return self.forward_trail
        if self.reverse_trail is not None:
            return self.reverse_trail
        return self.forward_trail.reversed()

    def cost(self, direction: str) -> float:
        if direction == REVERSE and self.reverse_trail is not None:
            return path_length(self.reverse_trail)
        return self.length

    def endpoint_poses(self, direction: str) -> Tuple[Pose, Pose]:
        """(start anchor pose, end anchor pose) in the trail frame for ``direction``."""
        if direction == FORWARD:
            return self.from_pose_in_trail_frame, self.to_pose_in_trail_frame
        return self.to_pose_in_trail_frame, self.from_pose_in_trail_frame

    def endpoints(self, direction: str) -> Tuple[str, str]:
        if direction == FORWARD:
            return self.from_anchor, self.to_anchor
        return self.to_anchor, self.from_anchor


def check_connection(c: Connection, reloc_radius: float = DEFAULT_RELOC_RADIUS) -> None:
    if c.from_anchor == c.to_anchor:
        raise MapError(f"connection {c.id}: self-loop on anchor {c.from_anchor}")
    frame = c.forward_trail.frame
    if c.from_pose_in_trail_frame.frame != frame or c.to_pose_in_trail_frame.frame != frame:
        raise MapError(f"connection {c.id}: endpoint poses not in the trail frame {frame!r}")
    actual = path_length(c.forward_trail)
    if abs(actual - c.length) > LENGTH_TOL:
        raise MapError(f"connection {c.id}: stored length {c.length} != trail length {actual}")
    first, last = c.forward_trail.points[0], c.forward_trail.points[-1]
    if first.distance_to(c.from_pose_in_trail_frame) > START_TOLERANCE + 1e-9:
        raise MapError(f"connection {c.id}: trail starts too far from anchor {c.from_anchor}")
    if last.distance_to(c.to_pose_in_trail_frame) > reloc_radius + 1e-9:
        raise MapError(f"connection {c.id}: trail ends too far from anchor {c.to_anchor}")
    if c.reverse_trail is not None:
        if c.reverse_trail.frame != frame:
            raise MapError(f"connection {c.id}: reverse trail must share the forward trail frame")
        rfirst, rlast = c.reverse_trail.points[0], c.reverse_trail.points[-1]
        if rfirst.distance_to(c.to_pose_in_trail_frame) > START_TOLERANCE + 1e-9:
            raise MapError(f"connection {c.id}: reverse trail starts too far from anchor {c.to_anchor}")
        if rlast.distance_to(c.from_pose_in_trail_frame) > reloc_radius + 1e-9:
            raise MapError(f"connection {c.id}: reverse trail ends too far from anchor {c.from_anchor}")


Adjacency = Dict[str, List[Tuple[str, str]]]


class MapGraph:
    """Anchors plus connections; the unit that gets saved and shared.

    Mutations go through :meth:`add_anchor`, :meth:`add_connection` and
    :meth:`set_reverse_trail`; each either succeeds completely or raises
    :class:`MapError` with the graph untouched.
    """

    def __init__(self, reloc_radius: float = DEFAULT_RELOC_RADIUS) -> None:
        self.anchors: Dict[str, Anchor] = {}
        self.connections: Dict[str, Connection] = {}
        self.adjacency: Adjacency = {}
        self.format_version = FORMAT_VERSION
        self.reloc_radius = reloc_radius

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MapGraph):
            return NotImplemented
        return (
            self.format_version == other.format_version
            and self.anchors == other.anchors
            and self.connections == other.connections
        )

    def __repr__(self) -> str:
        return f"MapGraph({len(self.anchors)} anchors, {len(self.connections)} connections)"

    def copy(self) -> "MapGraph":
        # values are frozen; shallow dict copies are enough
        other = MapGraph(self.reloc_radius)
        other.anchors = dict(self.anchors)
        other.connections = dict(self.connections)
        other.adjacency = copy.deepcopy(self.adjacency)
        other.format_version = self.format_version
        return other

    def replace_with(self, other: "MapGraph") -> None:
        self.anchors = other.anchors
        self.connections = other.connections
        self.adjacency = other.adjacency
        self.format_version = other.format_version

    def add_anchor(self, anchor: Anchor) -> str:
        if anchor.id in self.anchors:
            raise MapError(f"duplicate anchor id {anchor.id!r}")
        self.anchors[anchor.id] = anchor
        self.adjacency.setdefault(anchor.id, [])
        return anchor.id

    def next_connection_id(self) -> str:
        n = len(self.connections) + 1
        while f"c{n:04d}" in self.connections:
            n += 1
        return f"c{n:04d}"

    def add_connection(self, rec: ConnectionRecord) -> str:
        for end in (rec.from_anchor, rec.to_anchor):
            if end not in self.anchors:
                raise MapError(f"connection endpoint {end!r} is not in the map")
        if rec.from_anchor == rec.to_anchor:
            raise MapError(f"self-loop on anchor {rec.from_anchor!r}")
        if len(rec.raw_points) < 2:
            raise MapError("connection trail needs at least 2 points")
        cid = rec.id or self.next_connection_id()
        if cid in self.connections:
            raise MapError(f"duplicate connection id {cid!r}")
        forward = resample_trail(rec.raw_points, rec.spacing)
        reverse = None
        if rec.reverse_points is not None:
            reverse = resample_trail(rec.reverse_points, rec.spacing)
        conn = Connection(
            id=cid,
            from_anchor=rec.from_anchor,
            to_anchor=rec.to_anchor,
            forward_trail=forward,
            from_pose_in_trail_frame=rec.from_pose,
            to_pose_in_trail_frame=rec.to_pose,
            reverse_trail=reverse,
            path_anchor_ids=rec.path_anchor_ids,
            length=path_length(forward),
            reloc_radius=self.reloc_radius,
        )
        self._insert_connection(conn)
        return cid

    def _insert_connection(self, conn: Connection) -> None:
        self.connections[conn.id] = conn
        self.adjacency.setdefault(conn.from_anchor, []).append((conn.id, FORWARD))
        self.adjacency.setdefault(conn.to_anchor, []).append((conn.id, REVERSE))
        for key in (conn.from_anchor, conn.to_anchor):
            self.adjacency[key].sort()

    def set_reverse_trail(self, connection_id: str, points: Sequence[Pose], spacing: Optional[float] = None) -> None:
        """Attach a recorded B->A trail, expressed in the forward trail's frame."""
        old = self.connections.get(connection_id)
        if old is None:
            raise MapError(f"no connection {connection_id!r}")
        trail = resample_trail(points, spacing or old.forward_trail.spacing)
        try:
            new = Connection(
                id=old.id,
                from_anchor=old.from_anchor,
                to_anchor=old.to_anchor,
                forward_trail=old.forward_trail,
                from_pose_in_trail_frame=old.from_pose_in_trail_frame,
                to_pose_in_trail_frame=old.to_pose_in_trail_frame,
                reverse_trail=trail,
                path_anchor_ids=old.path_anchor_ids,
                length=old.length,
                reloc_radius=self.reloc_radius,
            )
        except ValueError as exc:
            raise MapError(str(exc)) from exc
        self.connections[connection_id] = new

    def neighbors(self, anchor_id: str):
        """Yield ``(connection, direction, other anchor id)`` leaving ``anchor_id``."""
        for cid, direction in self.adjacency.get(anchor_id, ()):
            conn = self.connections[cid]
            yield conn, direction, conn.endpoints(direction)[1]

    def rebuild_adjacency(self) -> Adjacency:
        adj: Adjacency = {aid: [] for aid in self.anchors}
        for cid in sorted(self.connections):
            c = self.connections[cid]
            adj.setdefault(c.from_anchor, []).append((cid, FORWARD))
            adj.setdefault(c.to_anchor, []).append((cid, REVERSE))
        for v in adj.values():
            v.sort()
        return adj

    def component(self, anchor_id: str) -> List[str]:
        seen = {anchor_id}
        stack = [anchor_id]
        while stack:
            cur = stack.pop()
            for _, _, other in self.neighbors(cur):
                if other not in seen:
                    seen.add(other)
                    stack.append(other)
        return sorted(seen)


def check_map(graph: MapGraph) -> List[str]:
    """Audit referential integrity and per-object invariants; returns problems found."""
    problems = []
    for cid in sorted(graph.connections):
        c = graph.connections[cid]
        if c.id != cid:
            problems.append(f"connection {cid}: keyed under a different id ({c.id})")
        for end in (c.from_anchor, c.to_anchor):
            if end not in graph.anchors:
                problems.append(f"connection {cid}: endpoint {end} does not exist")
        try:
            check_connection(c, graph.reloc_radius)
        except (MapError, ValueError) as exc:
            problems.append(str(exc))
    for aid in sorted(graph.anchors):
        if graph.anchors[aid].id != aid:
            problems.append(f"anchor {aid}: keyed under a different id ({graph.anchors[aid].id})")
    if graph.rebuild_adjacency() != graph.adjacency:
        problems.append("adjacency does not match connections")
    return problems


def nearby_anchors(graph: MapGraph, coarse: GeoPose, radius: float) -> List[str]:
    """Anchors worth offering near a coarse GPS fix.

    Outdoor anchors qualify by great-circle distance. Indoor anchors qualify
    when they share a connected component with a qualifying outdoor anchor and
    sort at that anchor's distance.
    """
    if not radius > 0.0:
        raise ValueError(f"radius must be positive, got {radius}")
    dist: Dict[str, float] = {}
    for aid, a in graph.anchors.items():
        if a.kind == OUTDOOR:
            d = haversine(coarse.latitude, coarse.longitude, a.geo.latitude, a.geo.longitude)
            if d <= radius:
                dist[aid] = d
    for aid in sorted(dist, key=lambda k: (dist[k], k)):
        for other in graph.component(aid):
            if graph.anchors[other].kind == INDOOR and other not in dist:
                dist[other] = dist[aid]
    return sorted(dist, key=lambda k: (dist[k], k))
