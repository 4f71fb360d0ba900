import json

import pytest

from anchornav.cli import main
from anchornav.mapstore import deserialize, serialize
from anchornav.simulate import random_map


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def walk(n, turn_first=0.0):
    events = [{"kind": "pan"}] * 3
    events += [{"kind": "move", "dt": 1.0, "distance": 1.0, "turn": turn_first if k == 0 else 0.0} for k in range(n)]
    return events + [{"kind": "stop", "dt": 0.0}]


@pytest.fixture
def built(tmp_path, capsys):
    m = tmp_path / "m.wmap.json"
    assert run(capsys, "map", "new", "--out", m)[0] == 0
    for aid in ("A", "B"):
        assert run(capsys, "anchor", "add", "--map", m, "--id", aid, "--name", f"Anchor {aid}")[0] == 0
    trace = tmp_path / "ab.json"
    trace.write_text(json.dumps({
        "from": "A", "to": "B", "noiseless": True, "seed": 1,
        "start": [0, 0, 0], "anchors": {"A": [0, 0, 0], "B": [0, 10, 0]}, "events": walk(10),
    }))
    assert run(capsys, "connect", "--map", m, trace)[0] == 0
    return m


def test_map_new_is_canonical_empty(tmp_path, capsys):
    m = tmp_path / "e.wmap.json"
    assert run(capsys, "map", "new", "--out", m)[0] == 0
    assert m.read_bytes() == b'{\n  "anchors": {},\n  "connections": {},\n  "format_version": 1\n}\n'


def test_map_new_random_is_seeded(tmp_path, capsys):
    m = tmp_path / "r.wmap.json"
    assert run(capsys, "map", "new", "--out", m, "--random-anchors", 5, "--seed", 9)[0] == 0
    assert m.read_bytes() == serialize(random_map(9, n_anchors=5)[0])


def test_build_and_route(built, capsys):
    g = deserialize(built.read_bytes())
    assert sorted(g.anchors) == ["A", "B"] and len(g.connections) == 1
    code, out, _ = run(capsys, "route", "--map", built, "A", "B")
    assert code == 0
    doc = json.loads(out)
    assert doc["anchor_sequence"] == ["A", "B"]
    assert doc["total_length"] == pytest.approx(10.0)
    assert doc["instructions"][-1]["text"] == "You have arrived"


def test_streamlined_connect_and_route_instruction(built, tmp_path, capsys):
    trace = tmp_path / "bc.json"
    trace.write_text(json.dumps({
        "from": "B", "noiseless": True, "start": [0, 10, 0], "anchors": {"B": [0, 10, 0]},
        "events": walk(10, turn_first=-90.0), "new_anchor": {"id": "C", "name": "Restroom"},
    }))
    assert run(capsys, "connect", "--map", built, trace)[0] == 0
    code, out, _ = run(capsys, "route", "--map", built, "A", "C")
    assert code == 0
    texts = [i["text"] for i in json.loads(out)["instructions"]]
    assert "Turn left and proceed 10 meters" in texts
    code, out, _ = run(capsys, "route", "--map", built, "A", "C", "--units", "feet")
    assert "Turn left and proceed 33 feet" in [i["text"] for i in json.loads(out)["instructions"]]


def test_failed_workflow_leaves_map_unchanged(built, tmp_path, capsys):
    before = built.read_bytes()
    code, _, err = run(capsys, "anchor", "add", "--map", built, "--id", "Z", "--scan-seconds", 29)
    assert code == 3 and "30 s" in err
    assert run(capsys, "anchor", "add", "--map", built, "--id", "A")[0] == 3
    trace = tmp_path / "bad.json"
    trace.write_text(json.dumps({
        "from": "A", "to": "B", "noiseless": True, "start": [0, 0, 0],
        "anchors": {"A": [0, 0, 0], "B": [0, 40, 0]}, "events": walk(10),
    }))
    assert run(capsys, "connect", "--map", built, trace)[0] == 3
    assert built.read_bytes() == before


def test_out_leaves_input_untouched(built, tmp_path, capsys):
    before = built.read_bytes()
    out = tmp_path / "copy.wmap.json"
    assert run(capsys, "anchor", "add", "--map", built, "--id", "Q", "--out", out)[0] == 0
    assert built.read_bytes() == before
    assert "Q" in deserialize(out.read_bytes()).anchors


def test_route_errors(built, capsys):
    assert run(capsys, "route", "--map", built, "A", "nope")[0] == 2
    assert run(capsys, "anchor", "add", "--map", built, "--id", "island")[0] == 0
    assert run(capsys, "route", "--map", built, "A", "island")[0] == 3


def test_poi_import(built, tmp_path, capsys):
    csv = tmp_path / "poi.csv"
    csv.write_text("name,lat,lon\nChurch door,42.0,-71.0\n")
    assert run(capsys, "poi", "import", "--map", built, csv)[0] == 0
    g = deserialize(built.read_bytes())
    assert [a.name for a in g.anchors.values() if a.kind == "outdoor"] == ["Church door"]
    bad = tmp_path / "bad.csv"
    bad.write_text("name,lat,lon\nx,95.0,0.0\n")
    assert run(capsys, "poi", "import", "--map", built, bad)[0] == 2


def test_export_geojson(built, capsys):
    assert run(capsys, "export", "geojson", "--map", built)[0] == 3
    code, out, _ = run(capsys, "export", "geojson", "--map", built, "--origin", "42.0,-71.0", "--route", "A", "B")
    assert code == 0
    doc = json.loads(out)
    assert doc["type"] == "FeatureCollection"
    assert len(doc["features"]) == 4
    assert run(capsys, "export", "geojson", "--map", built, "--origin", "north")[0] == 2


def test_invalid_and_missing_maps(tmp_path, capsys):
    bad = tmp_path / "bad.wmap.json"
    bad.write_text('{"format_version": 7, "anchors": {}, "connections": {}}\n')
    assert run(capsys, "route", "--map", bad, "A", "B")[0] == 4
    assert run(capsys, "validate", bad)[0] == 4
    assert run(capsys, "route", "--map", tmp_path / "missing.json", "A", "B")[0] == 2
    assert run(capsys, "route", "A", "B")[0] == 2


@pytest.mark.parametrize("argv", [[], ["route"], ["map", "new", "--seed", "-1"], ["frobnicate"]])
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


def _sim_setup(tmp_path, **extra):
    g, _ = random_map(21, n_anchors=5)
    (tmp_path / "m.wmap.json").write_bytes(serialize(g))
    cfg = dict({"map": "m.wmap.json", "seed": 21, "random_scenarios": 3}, **extra)
    (tmp_path / "sim.json").write_text(json.dumps(cfg))


def test_simulate_env_dir_and_determinism(tmp_path, monkeypatch, capsys):
    _sim_setup(tmp_path)
    monkeypatch.setenv("ANCHORNAV_CONFIG_DIR", str(tmp_path))
    monkeypatch.chdir("/")
    code, first, _ = run(capsys, "simulate", "--config", "sim.json", "--events", tmp_path / "ev.jsonl")
    assert code == 0
    report = json.loads(first)
    assert report["success_rate"] == 1.0 and len(report["runs"]) == 3
    lines = (tmp_path / "ev.jsonl").read_text().splitlines()
    assert lines and all(json.loads(x)["scenario"] in {r["scenario"] for r in report["runs"]} for x in lines)
    assert run(capsys, "simulate", "--config", "sim.json")[1] == first
    assert json.loads(run(capsys, "simulate", "--config", "sim.json", "--seed", 5)[1])["seed"] == 5


def test_simulate_failures(tmp_path, monkeypatch, capsys):
    _sim_setup(tmp_path, max_events=2)
    monkeypatch.chdir(tmp_path)
    assert run(capsys, "simulate", "--config", "sim.json")[0] == 3
    (tmp_path / "bad.json").write_text('{"map": "m.wmap.json", "random_scenarios": 1, "bogus": 1}')
    assert run(capsys, "simulate", "--config", "bad.json")[0] == 2
    assert run(capsys, "simulate", "--config", "absent.json")[0] == 2
    assert run(capsys, "simulate")[0] == 2
