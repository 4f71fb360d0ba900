"""``anchornav`` command line.

Exit status: 0 on success, 2 for usage or config errors, 3 when a workflow
or simulated run fails, 4 when a map file is invalid.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from typing import List, Optional, Sequence

from .geom import GeoPose, Pose
from .guidance import extract_keypoints, instruction_text, write_event_log
from .mapstore.geojson import GeoReferenceError, export_geojson
from .mapstore.io import canonical_dumps, deserialize, serialize, validate_bytes
from .mapstore.model import INDOOR, OUTDOOR, MapError, MapGraph
from .mapstore.poi import PoiError, import_poi
from .routing import StitchError, UnreachableError, plan_route
from .sensim import SensingConfig, TrackingSession, World
from .simulate import ConfigError, random_map, resolve_path, run_simulation
from .workflows import (
    ConnectionRecorder,
    WalkEvent,
    WorkflowError,
    connect_anchors,
    create_anchor,
    record_reverse,
    simulate_scan,
    streamlined_extend,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAILURE = 3
EXIT_INVALID_MAP = 4


class CliError(Exception):
    def __init__(self, message: str, code: int) -> None:
        super().__init__(message)
        self.code = code


def _read_bytes(path: str) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_CONFIG) from exc


def _load_json(path: str):
    try:
        return json.loads(_read_bytes(path).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CliError(f"{path}: not valid JSON: {exc}", EXIT_CONFIG) from exc


def _load_map(path: Optional[str]) -> MapGraph:
    if not path:
        raise CliError("--map is required", EXIT_CONFIG)
    try:
        return deserialize(_read_bytes(path))
    except MapError as exc:
        raise CliError(f"{path}: {exc}", EXIT_INVALID_MAP) from exc


def _write_atomic(path: str, data: bytes) -> None:
    # a crash mid-write must never leave a truncated map behind
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".anchornav-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(data: bytes, out: Optional[str]) -> None:
    if out:
        _write_atomic(out, data)
    else:
        sys.stdout.write(data.decode("utf-8"))
        sys.stdout.flush()


def _save_map(graph: MapGraph, args) -> None:
    _write_atomic(args.out or args.map, serialize(graph))


def _pose3(values: Sequence[float]) -> Pose:
    """``[x, y, heading]`` or ``[x, y, z, heading]`` in the world frame."""
    v = [float(x) for x in values]
    if len(v) == 3:
        return Pose.from_heading(v[0], v[1], v[2])
    if len(v) == 4:
        return Pose.from_heading(v[0], v[1], v[3], z=v[2])
    raise CliError(f"pose must be [x, y, heading] or [x, y, z, heading], got {values}", EXIT_CONFIG)


def _sensing(doc: dict, seed: Optional[int]) -> SensingConfig:
    try:
        sdoc = dict(doc.get("sensing", {}))
        if seed is not None:
            sdoc["seed"] = seed
        elif "seed" in doc:
            sdoc["seed"] = doc["seed"]
        sensing = SensingConfig.from_dict(sdoc)
    except (TypeError, ValueError) as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc
    return SensingConfig.noiseless(sensing.seed) if doc.get("noiseless") else sensing


# --- subcommands ---------------------------------------------------------


def cmd_map_new(args) -> int:
    target = args.out or args.map
    if not target:
        raise CliError("map new needs --out or --map", EXIT_CONFIG)
    if args.random_anchors:
        graph, _ = random_map(args.seed or 0, n_anchors=args.random_anchors)
    else:
        graph = MapGraph()
    _write_atomic(target, serialize(graph))
    return EXIT_OK


def cmd_anchor_add(args) -> int:
    graph = _load_map(args.map)
    geo = None
    kind = INDOOR
    if args.lat is not None or args.lon is not None:
        if args.lat is None or args.lon is None:
            raise CliError("outdoor anchors need both --lat and --lon", EXIT_CONFIG)
        kind = OUTDOOR
        try:
            geo = GeoPose(args.lat, args.lon, args.alt, args.yaw, args.ci_horizontal, args.ci_yaw, args.ci_vertical)
        except ValueError as exc:
            raise CliError(str(exc), EXIT_CONFIG) from exc
    world = World(args.seed or 0)
    session = TrackingSession(world, "cli")
    scan = simulate_scan(session, args.scan_seconds, args.sweep, args.translation)
    try:
        anchor = create_anchor(session, scan, args.name, args.notes, anchor_id=args.id, kind=kind, geo=geo)
        trial = graph.copy()
        trial.add_anchor(anchor)
    except (WorkflowError, ValueError) as exc:
        raise CliError(str(exc), EXIT_FAILURE) from exc
    _save_map(trial, args)
    return EXIT_OK


def cmd_poi_import(args) -> int:
    graph = _load_map(args.map)
    text = _read_bytes(args.csv).decode("utf-8")
    try:
        anchors = import_poi(text, id_prefix=args.prefix)
        trial = graph.copy()
        for a in anchors:
            trial.add_anchor(a)
    except PoiError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc
    except ValueError as exc:
        raise CliError(str(exc), EXIT_FAILURE) from exc
    _save_map(trial, args)
    return EXIT_OK


def cmd_connect(args) -> int:
    """Replay a walk-event trace into the map."""
    graph = _load_map(args.map)
    trace = _load_json(args.trace)
    if not isinstance(trace, dict) or "from" not in trace or "events" not in trace:
        raise CliError("a walk trace needs 'from' and 'events'", EXIT_CONFIG)
    sensing = _sensing(trace, args.seed)
    try:
        events = [WalkEvent.from_dict(e) for e in trace["events"]]
        reverse = [WalkEvent.from_dict(e) for e in trace.get("reverse_events", [])]
        start = _pose3(trace.get("start", [0.0, 0.0, 0.0]))
        truths = {aid: _pose3(p) for aid, p in trace.get("anchors", {}).items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"bad walk trace: {exc}", EXIT_CONFIG) from exc
    world = World(sensing.seed, true_pose=start)
    for aid, pose in truths.items():
        world.place_anchor(aid, pose)
    session = TrackingSession(world, trace.get("frame", "session"), sensing.drift, sensing.reloc)
    trial = graph.copy()
    try:
        if trace.get("to") is None:
            new = trace.get("new_anchor") or {}
            if "id" not in new:
                raise CliError("a trace without 'to' needs new_anchor.id", EXIT_CONFIG)
            if trace["from"] not in truths:
                raise CliError(f"walk trace lacks the true pose of {trace['from']!r}", EXIT_CONFIG)
            scan_doc = new.get("scan", {})

            def scan(s):
                return simulate_scan(
                    s, float(scan_doc.get("duration", 30.0)), float(scan_doc.get("sweep", 360.0)),
                    float(scan_doc.get("translation", 1.0)),
                )

            streamlined_extend(
                session, world, trial, trace["from"], events, scan,
                anchor_id=new["id"], name=new.get("name", ""), notes=new.get("notes", ""),
                connection_id=trace.get("connection_id"),
            )
        else:
            missing = [a for a in (trace["from"], trace["to"]) if a not in truths]
            if missing:
                raise CliError(f"walk trace lacks true poses for {missing}", EXIT_CONFIG)
            rec = ConnectionRecorder(trace["from"], trace["to"], connection_id=trace.get("connection_id"))
            cid = connect_anchors(rec, session, world, trial, events)
            if reverse:
                record_reverse(rec, session, world, trial, cid, reverse)
    except (WorkflowError, ValueError) as exc:
        raise CliError(str(exc), EXIT_FAILURE) from exc
    _save_map(trial, args)
    return EXIT_OK


def _route_doc(graph: MapGraph, start: str, goal: str, units: str) -> dict:
    route = plan_route(graph, start, goal)
    keypoints = extract_keypoints(route.polyline)
    return {
        "anchor_sequence": list(route.anchor_sequence),
        "total_length": route.total_length,
        "frame": route.frame,
        "segment_boundaries": list(route.segment_boundaries),
        "polyline": [list(p.position) for p in route.polyline.points],
        "instructions": [
            {"position": list(k.position), "turn": k.turn,
             "text": instruction_text(k.turn, k.distance_to_next, units)}
            for k in keypoints
        ],
    }


def cmd_route(args) -> int:
    graph = _load_map(args.map)
    try:
        doc = _route_doc(graph, args.start, args.goal, args.units)
    except KeyError as exc:
        raise CliError(str(exc.args[0]), EXIT_CONFIG) from exc
    except (UnreachableError, StitchError) as exc:
        raise CliError(str(exc), EXIT_FAILURE) from exc
    _emit(canonical_dumps(doc), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    if not args.config:
        raise CliError("simulate needs --config", EXIT_CONFIG)
    path = resolve_path(args.config)
    cfg = _load_json(path)
    if args.units and isinstance(cfg, dict):
        cfg = dict(cfg, units=args.units)
    if args.map and isinstance(cfg, dict):
        cfg = dict(cfg, map=os.path.abspath(args.map))
    log_fh = open(args.events, "w", encoding="utf-8") if args.events else None
    try:
        sink = None
        if log_fh is not None:
            sink = lambda scenario, events: write_event_log(events, log_fh, scenario=scenario)  # noqa: E731
        report = run_simulation(cfg, os.path.dirname(path), args.seed, sink)
    except ConfigError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc
    except MapError as exc:
        raise CliError(str(exc), EXIT_INVALID_MAP) from exc
    finally:
        if log_fh is not None:
            log_fh.close()
    _emit(report.to_bytes(), args.out)
    return EXIT_OK if all(r.success for r in report.runs) else EXIT_FAILURE


def _parse_origin(text: str) -> GeoPose:
    try:
        parts = [float(x) for x in text.split(",")]
        return GeoPose(parts[0], parts[1], parts[2] if len(parts) > 2 else 0.0)
    except (IndexError, ValueError) as exc:
        raise CliError(f"--origin must be 'lat,lon[,alt]': {exc}", EXIT_CONFIG) from exc


def cmd_export_geojson(args) -> int:
    graph = _load_map(args.map)
    origin = _parse_origin(args.origin) if args.origin else None
    try:
        routes = [plan_route(graph, s, g) for s, g in args.route or ()]
        doc = export_geojson(graph, origin, routes)
    except KeyError as exc:
        raise CliError(str(exc.args[0]), EXIT_CONFIG) from exc
    except (UnreachableError, StitchError, GeoReferenceError) as exc:
        raise CliError(str(exc), EXIT_FAILURE) from exc
    _emit(canonical_dumps(doc), args.out)
    return EXIT_OK


def cmd_validate(args) -> int:
    paths = list(args.files)
    if args.map:
        paths.insert(0, args.map)
    if not paths:
        raise CliError("validate needs --map or file arguments", EXIT_CONFIG)
    results = {}
    for p in paths:
        results[p] = validate_bytes(_read_bytes(p))
    doc = {"files": {p: {"ok": not probs, "problems": probs} for p, probs in results.items()}}
    _emit(canonical_dumps(doc), args.out)
    return EXIT_OK if not any(results.values()) else EXIT_INVALID_MAP


# --- argument parsing ----------------------------------------------------


def _u64(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--map", help="map file (edited in place unless --out is given)")
    common.add_argument("--config", help="simulation config; relative paths honor $ANCHORNAV_CONFIG_DIR")
    common.add_argument("--seed", type=_u64, help="seed for every random draw")
    common.add_argument("--out", help="output file; stdout when omitted for reports")
    common.add_argument("--units", choices=("meters", "feet"), default=None)

    parser = argparse.ArgumentParser(prog="anchornav", description="Anchor-graph mapping and navigation tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_map = sub.add_parser("map", help="map files")
    map_sub = p_map.add_subparsers(dest="action", required=True)
    p = map_sub.add_parser("new", parents=[common], help="create an empty (or seeded random) map")
    p.add_argument("--random-anchors", type=int, default=0, help="generate a seeded random map of this size")
    p.set_defaults(func=cmd_map_new)

    p_anchor = sub.add_parser("anchor", help="anchors")
    anchor_sub = p_anchor.add_subparsers(dest="action", required=True)
    p = anchor_sub.add_parser("add", parents=[common], help="scan and add an anchor")
    p.add_argument("--id", required=True)
    p.add_argument("--name", default="")
    p.add_argument("--notes", default="")
    p.add_argument("--scan-seconds", type=float, default=30.0)
    p.add_argument("--sweep", type=float, default=360.0, help="degrees swept during the scan")
    p.add_argument("--translation", type=float, default=1.0, help="meters moved during the scan")
    p.add_argument("--lat", type=float)
    p.add_argument("--lon", type=float)
    p.add_argument("--alt", type=float, default=0.0)
    p.add_argument("--yaw", type=float, default=0.0)
    p.add_argument("--ci-horizontal", type=float, default=0.0)
    p.add_argument("--ci-yaw", type=float, default=0.0)
    p.add_argument("--ci-vertical", type=float, default=0.0)
    p.set_defaults(func=cmd_anchor_add)

    p_poi = sub.add_parser("poi", help="points of interest")
    poi_sub = p_poi.add_subparsers(dest="action", required=True)
    p = poi_sub.add_parser("import", parents=[common], help="add outdoor anchors from a CSV")
    p.add_argument("csv")
    p.add_argument("--prefix", default="poi-")
    p.set_defaults(func=cmd_poi_import)

    p = sub.add_parser("connect", parents=[common], help="replay a walk-event trace into the map")
    p.add_argument("trace")
    p.set_defaults(func=cmd_connect)

    p = sub.add_parser("route", parents=[common], help="plan and stitch a route")
    p.add_argument("start")
    p.add_argument("goal")
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("simulate", parents=[common], help="run seeded navigation scenarios")
    p.add_argument("--events", help="write guidance events as JSON lines")
    p.set_defaults(func=cmd_simulate)

    p_export = sub.add_parser("export", help="inspection artifacts")
    export_sub = p_export.add_subparsers(dest="action", required=True)
    p = export_sub.add_parser("geojson", parents=[common], help="anchors, connections and routes as GeoJSON")
    p.add_argument("--origin", help="lat,lon[,alt] for maps without outdoor anchors")
    p.add_argument("--route", nargs=2, action="append", metavar=("START", "GOAL"))
    p.set_defaults(func=cmd_export_geojson)

    p = sub.add_parser("validate", parents=[common], help="audit map files")
    p.add_argument("files", nargs="*")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "units", None) is None:
        args.units = "meters" if args.func is cmd_route else None
    try:
        return args.func(args)
    except CliError as exc:
        print(f"anchornav: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
