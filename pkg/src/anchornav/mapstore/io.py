"""Canonical textual map format.

A map file is UTF-8 JSON with sorted keys, two-space indentation and a
trailing newline. Floats are written with Python's shortest round-trip
representation, so ``loads(dumps(m)) == m`` holds exactly and ``dumps`` of a
loaded canonical file reproduces it byte for byte.
"""

from __future__ import annotations

import json
from typing import Any, Dict, Optional

from ..geom import GeoPose, Pose
from .model import (
    FORMAT_VERSION,
    Anchor,
    Connection,
    MapError,
    MapGraph,
    check_map,
)
from .trail import BreadcrumbTrail


class MapFormatError(MapError):
    """A map document that cannot be loaded."""


def canonical_dumps(doc: Any) -> bytes:
    text = json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=True, allow_nan=False)
    return (text + "\n").encode("utf-8")


def _num(d: Dict[str, Any], key: str) -> float:
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"field {key!r} must be a number, got {type(v).__name__}")
    return float(v)


def pose_to_doc(p: Pose) -> Dict[str, Any]:
    return {"frame": p.frame, "position": list(p.position), "orientation": list(p.orientation)}


def pose_from_doc(d: Dict[str, Any]) -> Pose:
    return Pose(tuple(d["position"]), tuple(d["orientation"]), d["frame"])


def geo_to_doc(g: GeoPose) -> Dict[str, float]:
    return {
        "latitude": g.latitude,
        "longitude": g.longitude,
        "altitude": g.altitude,
        "yaw": g.yaw,
        "ci_horizontal": g.ci_horizontal,
        "ci_yaw": g.ci_yaw,
        "ci_vertical": g.ci_vertical,
    }


def geo_from_doc(d: Dict[str, Any]) -> GeoPose:
    return GeoPose(**{k: _num(d, k) for k in geo_to_doc(GeoPose(0.0, 0.0))})


def trail_to_doc(t: BreadcrumbTrail) -> Dict[str, Any]:
    # frame stored once; each crumb is [x, y, z, qw, qx, qy, qz]
    return {
        "frame": t.frame,
        "spacing": t.spacing,
        "points": [list(p.position) + list(p.orientation) for p in t.points],
    }


def trail_from_doc(d: Dict[str, Any]) -> BreadcrumbTrail:
    frame = d["frame"]
    pts = []
    for row in d["points"]:
        if len(row) != 7:
            raise ValueError(f"crumb needs 7 numbers, got {len(row)}")
        pts.append(Pose(tuple(row[:3]), tuple(row[3:]), frame))
    return BreadcrumbTrail(tuple(pts), _num(d, "spacing"))


def anchor_to_doc(a: Anchor) -> Dict[str, Any]:
    return {
        "id": a.id,
        "kind": a.kind,
        "frame": a.frame,
        "geo": geo_to_doc(a.geo) if a.geo is not None else None,
        "quality": a.quality,
        "name": a.name,
        "notes": a.notes,
        "created_at": a.created_at,
    }


def anchor_from_doc(d: Dict[str, Any]) -> Anchor:
    geo = geo_from_doc(d["geo"]) if d.get("geo") is not None else None
    return Anchor(
        id=d["id"],
        kind=d["kind"],
        frame=d["frame"],
        geo=geo,
        quality=_num(d, "quality"),
        name=d["name"],
        notes=d["notes"],
        created_at=_num(d, "created_at"),
    )


def connection_to_doc(c: Connection) -> Dict[str, Any]:
    return {
        "id": c.id,
        "from_anchor": c.from_anchor,
        "to_anchor": c.to_anchor,
        "forward_trail": trail_to_doc(c.forward_trail),
        "reverse_trail": trail_to_doc(c.reverse_trail) if c.reverse_trail is not None else None,
        "path_anchor_ids": list(c.path_anchor_ids),
        "length": c.length,
        "from_pose_in_trail_frame": pose_to_doc(c.from_pose_in_trail_frame),
        "to_pose_in_trail_frame": pose_to_doc(c.to_pose_in_trail_frame),
    }


def connection_from_doc(d: Dict[str, Any], reloc_radius: float) -> Connection:
    rev = d.get("reverse_trail")
    return Connection(
        id=d["id"],
        from_anchor=d["from_anchor"],
        to_anchor=d["to_anchor"],
        forward_trail=trail_from_doc(d["forward_trail"]),
        reverse_trail=trail_from_doc(rev) if rev is not None else None,
        path_anchor_ids=tuple(d["path_anchor_ids"]),
        length=_num(d, "length"),
        from_pose_in_trail_frame=pose_from_doc(d["from_pose_in_trail_frame"]),
        to_pose_in_trail_frame=pose_from_doc(d["to_pose_in_trail_frame"]),
        reloc_radius=reloc_radius,
    )


def map_to_doc(graph: MapGraph) -> Dict[str, Any]:
    return {
        "format_version": graph.format_version,
        "anchors": {aid: anchor_to_doc(a) for aid, a in graph.anchors.items()},
        "connections": {cid: connection_to_doc(c) for cid, c in graph.connections.items()},
    }


def serialize(graph: MapGraph) -> bytes:
    return canonical_dumps(map_to_doc(graph))


def map_from_doc(doc: Dict[str, Any], reloc_radius: Optional[float] = None) -> MapGraph:
    if not isinstance(doc, dict):
        raise MapFormatError("map document must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise MapFormatError(f"unsupported format_version {version!r} (expected {FORMAT_VERSION})")
    for key in ("anchors", "connections"):
        if not isinstance(doc.get(key), dict):
            raise MapFormatError(f"map document is missing the {key!r} object")
    graph = MapGraph() if reloc_radius is None else MapGraph(reloc_radius)
    for key in sorted(doc["anchors"]):
        body = doc["anchors"][key]
        try:
            anchor = anchor_from_doc(body)
        except (KeyError, TypeError, ValueError) as exc:
            raise MapFormatError(_describe(exc, f"anchor {key}")) from exc
        if anchor.id != key:
            raise MapFormatError(f"anchor {key}: id field says {anchor.id!r}")
        graph.add_anchor(anchor)
    for key in sorted(doc["connections"]):
        body = doc["connections"][key]
        try:
            conn = connection_from_doc(body, graph.reloc_radius)
        except (KeyError, TypeError, ValueError) as exc:
            raise MapFormatError(_describe(exc, f"connection {key}")) from exc
        if conn.id != key:
            raise MapFormatError(f"connection {key}: id field says {conn.id!r}")
        for end in (conn.from_anchor, conn.to_anchor):
            if end not in graph.anchors:
                raise MapFormatError(f"connection {key}: endpoint {end!r} does not exist")
        graph._insert_connection(conn)
    problems = check_map(graph)
    if problems:
        raise MapFormatError(problems[0])
    return graph


def _describe(exc: Exception, where: str) -> str:
    if isinstance(exc, KeyError):
        return f"{where}: missing field {exc.args[0]!r}"
    msg = str(exc)
    return msg if msg.startswith(where + ":") else f"{where}: {msg}"


def deserialize(data: bytes, reloc_radius: Optional[float] = None) -> MapGraph:
    try:
        doc = json.loads(data.decode("utf-8") if isinstance(data, bytes) else data)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MapFormatError(f"not a map document: {exc}") from exc
    return map_from_doc(doc, reloc_radius)


def load_map(path) -> MapGraph:
    with open(path, "rb") as fh:
        return deserialize(fh.read())


def save_map(graph: MapGraph, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(graph))


def validate_bytes(data: bytes):
    """Every problem with a map file, including non-canonical encoding."""
    try:
        graph = deserialize(data)
    except MapError as exc:
        return [str(exc)]
    if serialize(graph) != data:
        return ["document is not in canonical form"]
    return []
