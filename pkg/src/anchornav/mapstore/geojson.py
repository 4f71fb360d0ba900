"""GeoJSON export for inspecting maps and routes."""

from __future__ import annotations

import heapq
from typing import Dict, Optional, Sequence

from ..geom import GeoPose, Pose, compose, geo_to_local, invert, local_to_geo
from .model import OUTDOOR, MapGraph


class GeoReferenceError(ValueError):
    pass


def _lonlat(p: Pose, origin: GeoPose):
    g = local_to_geo(p, origin)
    return [g.longitude, g.latitude, g.altitude]


def anchor_enu_poses(graph: MapGraph, origin: GeoPose, root_unreferenced: bool) -> Dict[str, Pose]:
    """ENU pose of each anchor around ``origin``.

    Outdoor anchors are placed from their geo pose. Every other anchor is
    reached through the nearest (by trail length) outdoor anchor of its
    component. Components with no outdoor anchor are rooted at ``origin`` via
    their smallest anchor id when ``root_unreferenced`` is set.
    """
    placed: Dict[str, Pose] = {}
    heap = []
    for aid in sorted(graph.anchors):
        a = graph.anchors[aid]
        if a.kind == OUTDOOR:
            heap.append((0.0, aid, len(heap), geo_to_local(a.geo, origin)))
    pending = sorted(graph.anchors)
    tick = len(heap)
    while True:
        heapq.heapify(heap)
        while heap:
            cost, aid, _, pose = heapq.heappop(heap)
            if aid in placed:
                continue
            placed[aid] = pose
            for conn, direction, other in graph.neighbors(aid):
                if other in placed:
                    continue
                here, there = conn.endpoint_poses(direction)
                # anchor frame -> trail frame -> next anchor frame
                nxt = compose(compose(pose, invert(here)), there)
                tick += 1
                heapq.heappush(heap, (cost + conn.cost(direction), other, tick, nxt.with_frame("enu")))
        rest = [a for a in pending if a not in placed]
        if not rest:
            return placed
        if not root_unreferenced:
            raise GeoReferenceError(
                f"anchor {rest[0]} cannot be geo-referenced; supply an origin"
            )
        heap = [(0.0, rest[0], tick, Pose.identity("enu"))]


def export_geojson(graph: MapGraph, origin: Optional[GeoPose] = None, routes: Sequence = ()) -> dict:
    """FeatureCollection with anchors as points and connections as lines.

    ``routes`` may hold :class:`anchornav.routing.Route` objects, exported as
    extra line features in the same coordinates.
    """
    outdoor = sorted(aid for aid, a in graph.anchors.items() if a.kind == OUTDOOR)
    if origin is None:
        if not outdoor and graph.anchors:
            raise GeoReferenceError("map has no outdoor anchor; supply an origin")
        ref = graph.anchors[outdoor[0]].geo if outdoor else None
    else:
        ref = origin
    features = []
    placed = anchor_enu_poses(graph, ref, root_unreferenced=origin is not None) if ref else {}
    for aid in sorted(graph.anchors):
        a = graph.anchors[aid]
        if a.kind == OUTDOOR:
            coords = [a.geo.longitude, a.geo.latitude, a.geo.altitude]
        else:
            coords = _lonlat(placed[aid], ref)
        features.append({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": coords},
            "properties": {
                "feature": "anchor",
                "id": aid,
                "kind": a.kind,
                "name": a.name,
                "notes": a.notes,
                "quality": a.quality,
            },
        })
    for cid in sorted(graph.connections):
        c = graph.connections[cid]
        to_enu = compose(placed[c.from_anchor], invert(c.from_pose_in_trail_frame))
        coords = [_lonlat(compose(to_enu, p), ref) for p in c.forward_trail.points]
        features.append({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": coords},
            "properties": {
                "feature": "connection",
                "id": cid,
                "from": c.from_anchor,
                "to": c.to_anchor,
                "length": c.length,
                "path_anchor_ids": list(c.path_anchor_ids),
                "has_reverse_trail": c.reverse_trail is not None,
            },
        })
    for i, route in enumerate(routes):
        start = route.anchor_sequence[0]
        to_enu = compose(placed[start], invert(route.anchor_poses[start]))
        coords = [_lonlat(compose(to_enu, p), ref) for p in route.polyline.points]
        features.append({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": coords},
            "properties": {
                "feature": "route",
                "index": i,
                "anchors": list(route.anchor_sequence),
                "length": route.total_length,
            },
        })
    return {"type": "FeatureCollection", "features": features}
