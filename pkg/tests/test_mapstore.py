import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anchornav.geom import GeoPose, Pose, geo_to_local, haversine, local_to_geo
from anchornav.mapstore import (
    FORWARD,
    INDOOR,
    OUTDOOR,
    REVERSE,
    Anchor,
    BreadcrumbTrail,
    ConnectionRecord,
    GeoReferenceError,
    MapError,
    MapFormatError,
    MapGraph,
    PoiError,
    check_map,
    deserialize,
    export_geojson,
    import_poi,
    nearby_anchors,
    path_length,
    resample_trail,
    serialize,
    validate_bytes,
)
from anchornav.routing import plan_route
from oracles import chord_distance

ORIGIN = GeoPose(42.0, -71.0, 0.0)


def line(x0, y0, x1, y1, n, frame="s"):
    return tuple(
        Pose((x0 + (x1 - x0) * k / (n - 1), y0 + (y1 - y0) * k / (n - 1), 0.0), frame=frame) for k in range(n)
    )


def straight_record(a, b, length=10.0, frame="s", **kw):
    pts = line(0, 0, 0, length, 41, frame)
    return ConnectionRecord(a, b, pts, Pose.identity(frame), Pose((0.0, length, 0.0), frame=frame), **kw)


def small_map():
    g = MapGraph()
    for aid in "ABC":
        g.add_anchor(Anchor(aid, name=f"Anchor {aid}", quality=0.75, created_at=0.0))
    g.add_connection(straight_record("A", "B", 10.0, "s1", path_anchor_ids=("c0001-pa1",)))
    g.add_connection(straight_record("B", "C", 5.0, "s2"))
    return g


def outdoor(aid, lat, lon, **kw):
    return Anchor(aid, kind=OUTDOOR, geo=GeoPose(lat, lon, 0.0, 90.0), quality=0.5, created_at=0.0, **kw)


# --- anchors ------------------------------------------------------------------------

def test_add_anchor_to_empty_map():
    g = MapGraph()
    assert g.add_anchor(Anchor("A")) == "A"
    assert len(g.anchors) == 1 and len(g.connections) == 0


def test_anchor_reference_pose_is_identity_in_own_frame():
    a = Anchor("A")
    assert a.frame == "anchor:A"
    assert a.reference_pose == Pose.identity("anchor:A")
    with pytest.raises(MapError):
        Anchor("B", reference_pose=Pose((1.0, 0.0, 0.0), frame="anchor:B"))


def test_duplicate_anchor_leaves_map_unchanged():
    g = small_map()
    before = serialize(g)
    with pytest.raises(MapError):
        g.add_anchor(Anchor("A"))
    assert serialize(g) == before


def test_outdoor_anchor_needs_geo():
    with pytest.raises(MapError):
        Anchor("X", kind=OUTDOOR)
    with pytest.raises(MapError):
        Anchor("X", kind=INDOOR, geo=GeoPose(0, 0))


def test_outdoor_anchor_found_by_query_back():
    g = MapGraph()
    g.add_anchor(outdoor("O", 42.0, -71.0))
    assert nearby_anchors(g, GeoPose(42.0, -71.0), 1.0) == ["O"]


def test_anchor_created_at_excluded_from_equality():
    assert Anchor("A", created_at=1.0) == Anchor("A", created_at=2.0)


# --- trails -------------------------------------------------------------------------

def test_path_length_examples():
    assert path_length([Pose((0, 0, 0)), Pose((5, 0, 0))]) == 5.0
    assert path_length([Pose((0, 0, 0)), Pose((3, 0, 0)), Pose((3, 4, 0))]) == 7.0
    with pytest.raises(ValueError):
        path_length([Pose()])


def test_path_length_random_walk_oracle():
    rng = np.random.default_rng(10)
    xyz = np.cumsum(rng.standard_normal((100, 3)), axis=0)
    pts = [Pose(tuple(p)) for p in xyz]
    total = 0.0
    for a, b in zip(xyz, xyz[1:]):
        total += math.sqrt(sum((a - b) ** 2))
    assert path_length(pts) == pytest.approx(total, rel=1e-12)


def test_resample_straight_line():
    t = resample_trail([Pose((0, 0, 0)), Pose((0, 10, 0))], 1.0)
    assert len(t.points) == 11
    for k, p in enumerate(t.points):
        assert p.position == pytest.approx((0, k, 0), abs=1e-12)


def test_resample_short_trail_keeps_endpoints():
    a, b = Pose((0, 0, 0)), Pose((0.4, 0, 0))
    assert resample_trail([a, b], 1.0).points == (a, b)


def test_resample_rejects_bad_input():
    with pytest.raises(ValueError):
        resample_trail([Pose(), Pose((1, 0, 0))], 0.0)
    with pytest.raises(ValueError):
        resample_trail([Pose()], 1.0)


@st.composite
def raw_trails(draw):
    n = draw(st.integers(2, 30))
    steps = draw(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=n - 1, max_size=n - 1))
    pts = [Pose((0.0, 0.0, 0.0), frame="s")]
    for dx, dy in steps:
        x, y, _ = pts[-1].position
        pts.append(Pose((x + dx, y + dy, 0.0), frame="s"))
    return pts


@settings(max_examples=150, deadline=None)
@given(raw_trails(), st.sampled_from([0.25, 0.5, 1.0, 2.0]))
def test_resample_properties(raw, spacing):
    t = resample_trail(raw, spacing)
    assert t.points[0] == raw[0]
    assert t.points[-1] == raw[-1]
    for a, b in zip(t.points, t.points[1:]):
        assert a.distance_to(b) <= spacing + 1e-6
    again = resample_trail(t.points, spacing)
    assert len(again.points) == len(t.points)
    for p, q in zip(again.points, t.points):
        assert p.distance_to(q) <= 1e-9


def test_trail_invariants():
    with pytest.raises(ValueError):
        BreadcrumbTrail((Pose(frame="a"),))
    with pytest.raises(ValueError):
        BreadcrumbTrail((Pose(frame="a"), Pose((0.5, 0, 0), frame="b")))
    with pytest.raises(ValueError):
        BreadcrumbTrail((Pose(), Pose((2.0, 0, 0))), spacing=1.0)


def test_reversed_trail_faces_back():
    t = resample_trail(line(0, 0, 0, 3, 4), 1.0)
    r = t.reversed()
    assert r.points[0].position == t.points[-1].position
    assert abs(((r.points[0].heading - t.points[-1].heading) % 360) - 180) < 1e-9


# --- connections -----------------------------------------------------------------

def test_add_straight_connection():
    g = MapGraph()
    g.add_anchor(Anchor("A"))
    g.add_anchor(Anchor("B"))
    cid = g.add_connection(straight_record("A", "B"))
    c = g.connections[cid]
    assert c.length == pytest.approx(10.0, abs=1e-6)
    assert len(c.forward_trail.points) == 11
    assert cid == "c0001"
    assert g.adjacency["A"] == [(cid, FORWARD)]
    assert g.adjacency["B"] == [(cid, REVERSE)]


def test_connection_errors_leave_map_unchanged():
    g = small_map()
    before = serialize(g)
    with pytest.raises(MapError):
        g.add_connection(straight_record("A", "A"))
    with pytest.raises(MapError):
        g.add_connection(straight_record("A", "Z"))
    with pytest.raises(MapError):
        g.add_connection(ConnectionRecord("A", "C", (Pose(frame="s"),), Pose(frame="s"), Pose(frame="s")))
    # trail that starts far from the start anchor
    with pytest.raises(MapError):
        g.add_connection(ConnectionRecord("A", "C", line(0, 0, 0, 5, 6), Pose((3.0, 0, 0), frame="s"), Pose((0, 5.0, 0), frame="s")))
    assert serialize(g) == before


def test_reverse_trail_used_for_reverse_routing():
    g = MapGraph()
    g.add_anchor(Anchor("A"))
    g.add_anchor(Anchor("B"))
    cid = g.add_connection(straight_record("A", "B"))
    fallback = plan_route(g, "B", "A")
    assert fallback.total_length == pytest.approx(10.0)
    # a detour back via x = 2
    detour = line(0, 10, 2, 10, 3) + line(2, 10, 2, 0, 11)[1:] + line(2, 0, 0, 0, 3)[1:]
    g.set_reverse_trail(cid, detour)
    route = plan_route(g, "B", "A")
    assert route.total_length == pytest.approx(14.0)
    assert max(p.position[0] for p in route.polyline.points) == pytest.approx(2.0)
    assert plan_route(g, "A", "B").total_length == pytest.approx(10.0)


def test_adjacency_rebuild_matches():
    g = small_map()
    assert g.rebuild_adjacency() == g.adjacency
    assert check_map(g) == []


# --- serialization --------------------------------------------------------------

def test_empty_map_round_trip():
    data = serialize(MapGraph())
    doc = json.loads(data)
    assert doc == {"anchors": {}, "connections": {}, "format_version": 1}
    assert serialize(deserialize(data)) == data


def test_small_map_round_trip():
    g = small_map()
    data = serialize(g)
    assert serialize(g) == data
    back = deserialize(data)
    assert back == g
    assert serialize(back) == data
    assert back.adjacency == g.adjacency


def test_outdoor_and_reverse_round_trip():
    g = small_map()
    g.add_anchor(outdoor("O", 42.0001, -71.0002, name="Church door", notes="north side"))
    g.set_reverse_trail("c0002", list(reversed(line(0, 0, 0, 5, 21, "s2"))))
    data = serialize(g)
    assert deserialize(data) == g
    assert serialize(deserialize(data)) == data


def test_unknown_format_version():
    doc = json.loads(serialize(small_map()))
    doc["format_version"] = 2
    with pytest.raises(MapFormatError, match="version"):
        deserialize(json.dumps(doc).encode())


def test_dangling_endpoint_names_connection():
    doc = json.loads(serialize(small_map()))
    doc["connections"]["c0002"]["to_anchor"] = "ghost"
    with pytest.raises(MapError, match="c0002"):
        deserialize(json.dumps(doc).encode())


def test_validate_reports_non_canonical_bytes():
    data = serialize(small_map())
    assert validate_bytes(data) == []
    relaxed = json.dumps(json.loads(data)).encode()
    assert validate_bytes(relaxed) == ["document is not in canonical form"]
    assert validate_bytes(b"{not json") != []


# --- POI import ----------------------------------------------------------------------

def test_poi_single_row():
    [a] = import_poi("name,lat,lon\nChurch door,42.0,-71.0\n")
    assert a.kind == OUTDOOR and a.name == "Church door"
    assert a.quality == 0.5
    assert a.geo.ci_horizontal == 2.0
    assert (a.geo.latitude, a.geo.longitude, a.geo.altitude, a.geo.yaw) == (42.0, -71.0, 0.0, 0.0)


def test_poi_empty_table():
    assert import_poi("name,lat,lon,alt,yaw\n") == []
    assert import_poi([]) == []


def test_poi_latitude_out_of_range():
    with pytest.raises(PoiError) as err:
        import_poi("name,lat,lon\nBad,95,-71\n")
    assert err.value.row == 1 and err.value.field == "lat"


def test_poi_malformed_second_row():
    with pytest.raises(PoiError) as err:
        import_poi("name,lat,lon,alt,yaw\nA,42,-71,,\nB,42,abc,,\n")
    assert err.value.row == 2 and err.value.field == "lon"


# --- nearby anchors ------------------------------------------------------------------

def test_nearby_examples():
    here = GeoPose(42.0, -71.0)
    north_50 = local_to_geo(Pose((0.0, 50.0, 0.0)), here)
    north_150 = local_to_geo(Pose((0.0, 150.0, 0.0)), here)
    assert chord_distance(42.0, -71.0, north_50.latitude, north_50.longitude) == pytest.approx(50.0, rel=1e-9)
    g = MapGraph()
    g.add_anchor(outdoor("near", north_50.latitude, north_50.longitude))
    assert nearby_anchors(g, here, 100.0) == ["near"]
    g2 = MapGraph()
    g2.add_anchor(outdoor("far", north_150.latitude, north_150.longitude))
    assert nearby_anchors(g2, here, 100.0) == []


def test_nearby_includes_connected_indoor():
    g = MapGraph()
    g.add_anchor(outdoor("door", 42.0, -71.0))
    g.add_anchor(Anchor("lobby"))
    g.add_anchor(Anchor("isolated"))
    g.add_connection(straight_record("door", "lobby"))
    assert nearby_anchors(g, GeoPose(42.0, -71.0), 10.0) == ["door", "lobby"]


def _brute_nearby(g, coarse, radius):
    dist = {}
    for aid, a in g.anchors.items():
        if a.kind == OUTDOOR:
            d = chord_distance(coarse.latitude, coarse.longitude, a.geo.latitude, a.geo.longitude)
            if d <= radius:
                dist[aid] = d
    # reachability by repeated relaxation over raw connections
    reach = {aid: {aid} for aid in g.anchors}
    changed = True
    while changed:
        changed = False
        for c in g.connections.values():
            merged = reach[c.from_anchor] | reach[c.to_anchor]
            for end in (c.from_anchor, c.to_anchor):
                if reach[end] != merged:
                    reach[end] = merged
                    changed = True
    for aid, a in g.anchors.items():
        if a.kind == INDOOR:
            ds = [dist[o] for o in dist if any(o in reach[x] for x in reach[aid])]
            if ds:
                dist[aid] = min(ds)
    return sorted(dist, key=lambda k: (round(dist[k], 6), k))


def test_nearby_matches_brute_force():
    rng = np.random.default_rng(11)
    for trial in range(30):
        g = MapGraph()
        n = int(rng.integers(2, 50))
        for i in range(n):
            aid = f"n{i:02d}"
            if rng.random() < 0.4:
                p = Pose((rng.uniform(-300, 300), rng.uniform(-300, 300), 0.0))
                geo = local_to_geo(p, ORIGIN)
                g.add_anchor(outdoor(aid, geo.latitude, geo.longitude))
            else:
                g.add_anchor(Anchor(aid))
        ids = sorted(g.anchors)
        for _ in range(int(rng.integers(0, n))):
            i, j = rng.choice(n, 2, replace=False)
            g.add_connection(straight_record(ids[i], ids[j], frame=f"s{len(g.connections)}"))
        radius = float(rng.uniform(50, 400))
        got = nearby_anchors(g, ORIGIN, radius)
        assert got == _brute_nearby(g, ORIGIN, radius)
        assert all(haversine(42.0, -71.0, g.anchors[a].geo.latitude, g.anchors[a].geo.longitude) <= radius
                   for a in got if g.anchors[a].kind == OUTDOOR)


# --- GeoJSON -------------------------------------------------------------------------

def test_geojson_two_outdoor_one_connection():
    g = MapGraph()
    a = local_to_geo(Pose.identity(), ORIGIN)
    b = local_to_geo(Pose((0.0, 10.0, 0.0)), ORIGIN)
    g.add_anchor(outdoor("A", a.latitude, a.longitude))
    g.add_anchor(outdoor("B", b.latitude, b.longitude))
    g.add_connection(straight_record("A", "B"))
    doc = export_geojson(g)
    kinds = [f["geometry"]["type"] for f in doc["features"]]
    assert kinds.count("Point") == 2 and kinds.count("LineString") == 1
    for f in doc["features"]:
        if f["geometry"]["type"] == "Point":
            geo = g.anchors[f["properties"]["id"]].geo
            lon, lat, _ = f["geometry"]["coordinates"]
            assert round(lon, 7) == round(geo.longitude, 7)
            assert round(lat, 7) == round(geo.latitude, 7)


def test_geojson_indoor_only_needs_origin():
    g = small_map()
    with pytest.raises(GeoReferenceError):
        export_geojson(g)
    doc = export_geojson(g, ORIGIN)
    points = {f["properties"]["id"]: f["geometry"]["coordinates"] for f in doc["features"] if f["properties"]["feature"] == "anchor"}
    # A is the root at the origin; B is 10 m along A's trail, C 5 m further
    for aid, expected in {"A": 0.0, "B": 10.0, "C": 15.0}.items():
        lon, lat, alt = points[aid]
        p = geo_to_local(GeoPose(lat, lon, alt), ORIGIN)
        assert math.hypot(*p.position[:2]) == pytest.approx(expected, abs=1e-6)


def test_geojson_route_feature():
    g = small_map()
    route = plan_route(g, "A", "C")
    doc = export_geojson(g, ORIGIN, [route])
    routes = [f for f in doc["features"] if f["properties"]["feature"] == "route"]
    assert len(routes) == 1
    assert routes[0]["properties"]["anchors"] == ["A", "B", "C"]
