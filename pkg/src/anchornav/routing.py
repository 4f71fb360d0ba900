"""Shortest routes over the anchor graph and stitching into one frame."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from .geom import FrameTransform, Pose, relative_transform
from .mapstore.model import Connection, MapGraph
from .mapstore.trail import BreadcrumbTrail


class UnreachableError(LookupError):
    def __init__(self, start: str, goal: str) -> None:
        super().__init__(f"no route from {start!r} to {goal!r}")
        self.start = start
        self.goal = goal


class StitchError(ValueError):
    def __init__(self, anchor_id: str, message: str = "") -> None:
        super().__init__(message or f"missing junction localization for anchor {anchor_id!r}")
        self.anchor_id = anchor_id


Hop = Tuple[str, str]  # (connection id, direction)


@dataclass(frozen=True)
class PathResult:
    anchors: Tuple[str, ...]
    cost: float
    hops: Tuple[Hop, ...]


def _best_hops(graph: MapGraph, anchor_id: str) -> Dict[str, Tuple[float, str, str]]:
    """Cheapest connection to each neighbor: other -> (cost, connection id, direction)."""
    best: Dict[str, Tuple[float, str, str]] = {}
    for conn, direction, other in graph.neighbors(anchor_id):
        cand = (conn.cost(direction), conn.id, direction)
        if other not in best or cand < best[other]:
            best[other] = cand
    return best


def shortest_path(graph: MapGraph, start: str, goal: str) -> PathResult:
    """Dijkstra over anchors with trail length as edge weight.

    Connections are walkable both ways. Among equal-cost routes the one with
    the lexicographically smallest anchor sequence wins, so the answer is
    unique for any map.
    """
    for aid in (start, goal):
        if aid not in graph.anchors:
            raise KeyError(f"unknown anchor {aid!r}")
    # labels are (cost, anchor sequence); hops ride along for stitching
    heap = [(0.0, (start,), ())]
    done = set()
    while heap:
        cost, seq, hops = heapq.heappop(heap)
        node = seq[-1]
        if node in done:
            continue
        done.add(node)
        if node == goal:
            return PathResult(seq, cost, hops)
        for other, (w, cid, direction) in sorted(_best_hops(graph, node).items()):
            if other not in done:
                heapq.heappush(heap, (cost + w, seq + (other,), hops + ((cid, direction),)))
    raise UnreachableError(start, goal)


def _hops_for(graph: MapGraph, sequence: Sequence[str]) -> Tuple[Hop, ...]:
    hops = []
    for a, b in zip(sequence, sequence[1:]):
        best = _best_hops(graph, a).get(b)
        if best is None:
            raise ValueError(f"anchors {a!r} and {b!r} are not connected")
        hops.append((best[1], best[2]))
    return tuple(hops)


@dataclass(frozen=True)
class Route:
    anchor_sequence: Tuple[str, ...]
    total_length: float
    polyline: BreadcrumbTrail
    segment_boundaries: Tuple[int, ...]
    anchor_poses: Mapping[str, Pose]
    hops: Tuple[Hop, ...] = ()

    @property
    def frame(self) -> str:
        return self.polyline.frame

    @property
    def goal_pose(self) -> Pose:
        return self.anchor_poses[self.anchor_sequence[-1]]

    @property
    def start_pose(self) -> Pose:
        return self.anchor_poses[self.anchor_sequence[0]]


# junction anchor id -> (its pose in the incoming segment frame, in the outgoing one)
Alignments = Mapping[str, Tuple[Pose, Pose]]


def junction_alignments(graph: MapGraph, sequence: Sequence[str], hops: Sequence[Hop]) -> Dict[str, Tuple[Pose, Pose]]:
    """Shared-anchor localizations implied by the recorded connections."""
    out = {}
    for i in range(1, len(sequence) - 1):
        c_in = graph.connections[hops[i - 1][0]]
        c_out = graph.connections[hops[i][0]]
        incoming = c_in.endpoint_poses(hops[i - 1][1])[1]
        outgoing = c_out.endpoint_poses(hops[i][1])[0]
        out[sequence[i]] = (incoming, outgoing)
    return out


def _bridge(a: Pose, b: Pose, spacing: float) -> List[Pose]:
    """Interior points so a straight hop from ``a`` to ``b`` respects ``spacing``."""
    gap = a.distance_to(b)
    n = math.ceil(gap / spacing - 1e-9)
    pts = []
    for k in range(1, n):
        t = k / n
        pos = tuple(a.position[i] + t * (b.position[i] - a.position[i]) for i in range(3))
        pts.append(Pose(pos, b.orientation, b.frame))
    return pts


def stitch_route(
    graph: MapGraph,
    sequence: Union[PathResult, Sequence[str]],
    alignments: Optional[Alignments] = None,
) -> Route:
    """Express every segment trail of a route in the first segment's frame.

    At each junction the anchor closing one segment opens the next; chaining
    :func:`relative_transform` at those shared anchors carries each later
    trail into the navigation frame. ``alignments`` overrides the junction
    poses stored in the map (for instance with live, noisy localizations) and
    must then cover every junction.
    """
    if isinstance(sequence, PathResult):
        seq, hops = tuple(sequence.anchors), tuple(sequence.hops)
    else:
        seq = tuple(sequence)
        hops = _hops_for(graph, seq)
    if not seq:
        raise ValueError("empty anchor sequence")
    if len(seq) == 1:
        raise ValueError("a route needs at least one connection")
    junctions = junction_alignments(graph, seq, hops) if alignments is None else alignments
    first = graph.connections[hops[0][0]]
    nav_frame = first.forward_trail.frame
    to_nav = FrameTransform(nav_frame, nav_frame, Pose.identity(nav_frame))
    points: List[Pose] = []
    boundaries = []
    anchor_poses: Dict[str, Pose] = {}
    total = 0.0
    spacing = first.forward_trail.spacing
    prev_frame = nav_frame
    for i, (cid, direction) in enumerate(hops):
        conn: Connection = graph.connections[cid]
        trail = conn.trail(direction)
        if i > 0:
            junction = seq[i]
            if junction not in junctions:
                raise StitchError(junction)
            incoming, outgoing = junctions[junction]
            # frame of this segment -> frame of previous segment -> navigation frame
            step = relative_transform(incoming.with_frame(prev_frame), outgoing.with_frame(trail.frame))
            to_nav = FrameTransform(trail.frame, nav_frame, step.then(to_nav).transform)
        start_pose, end_pose = conn.endpoint_poses(direction)
        if i == 0:
            anchor_poses[seq[0]] = to_nav.apply(start_pose)
        anchor_poses[seq[i + 1]] = to_nav.apply(end_pose)
        mapped = [to_nav.apply(p) for p in trail.points]
        if points:
            points.extend(_bridge(points[-1], mapped[0], spacing))
        boundaries.append(len(points))
        points.extend(mapped)
        total += conn.cost(direction)
        prev_frame = trail.frame
    polyline = BreadcrumbTrail(tuple(points), spacing)
    return Route(seq, total, polyline, tuple(boundaries), anchor_poses, hops)


def plan_route(graph: MapGraph, start: str, goal: str, alignments: Optional[Alignments] = None) -> Route:
    return stitch_route(graph, shortest_path(graph, start, goal), alignments)
