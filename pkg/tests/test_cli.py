import csv
import json
import re

import numpy as np
import pytest

from flatplan import cli


def write_doc(tmp_path, doc, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def quadrant_doc(n=6, d=4):
    return {
        "version": 1,
        "hyperplanes": [
            {"normal": [1.0, 0.0], "offset": 0.0},
            {"normal": [0.0, 1.0], "offset": 0.0},
        ],
        "obstacles": [{"signs": "--", "name": "corner"}],
        "agents": [{"waypoints": [[-2.0, 0.8], [2.5, -0.8]], "timestamps": [0.0, 1.0]}],
        "spline": {"n": n, "d": d},
    }


def blocked_doc():
    doc = quadrant_doc()
    doc["agents"] = [
        {"waypoints": [[-2.0, -2.0], [1.0, 1.0], [3.0, -2.0]], "timestamps": [0.0, 0.5, 1.0]}
    ]
    return doc


def slit_doc():
    return {
        "version": 1,
        "hyperplanes": [
            {"normal": [1.0, 0.0], "offset": -0.3},
            {"normal": [1.0, 0.0], "offset": 0.3},
            {"normal": [0.0, 1.0], "offset": 0.0},
            {"normal": [0.0, 1.0], "offset": 0.5},
        ],
        "obstacles": [{"signs": "-+--"}, {"signs": "-+++"}],
        "agents": [
            {
                "waypoints": [[-5.0, 2.0], [-1.0, 2.0], [1.0, 2.0], [5.0, 2.0]],
                "timestamps": [0.0, 0.4, 0.6, 1.0],
            }
        ],
        "spline": {"n": 8, "d": 4},
    }


def corridor_doc():
    return {
        "version": 1,
        "hyperplanes": [
            {"normal": [1.0, 0.0], "offset": 0.0},
            {"normal": [0.0, 1.0], "offset": 0.0},
        ],
        "obstacles": [],
        "agents": [
            {"waypoints": [[-5.0, 3.0], [5.0, 3.0]], "timestamps": [0.0, 10.0], "name": "north"},
            {"waypoints": [[-5.0, -3.0], [5.0, -3.0]], "timestamps": [0.0, 10.0], "name": "south"},
        ],
        "spline": {"n": 8, "d": 4},
        "config": {"margin": 0.1},
    }


def svg_ids(path):
    return re.findall(r'id="([A-Za-z]+(?:-[A-Za-z0-9]+)+)"', path.read_text())


class TestPlan:
    def test_writes_plan_and_trace(self, tmp_path, capsys):
        scen = write_doc(tmp_path, quadrant_doc())
        rc = cli.main(["plan", scen, "--out", str(tmp_path / "out"), "--dt", "0.001"])
        assert rc == 0
        doc = json.loads((tmp_path / "out" / "plan.json").read_text())
        assert doc["plans"][0]["status"] == "optimal"
        assert doc["spline"] == {"n": 6, "d": 4}
        with open(tmp_path / "out" / "trace_agent0.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["t", "x", "y", "psi", "va", "phi"]
        assert len(rows) - 1 == int(np.floor(1.0 / 0.001)) + 1
        assert "status=optimal" in capsys.readouterr().out

    def test_infeasible_exit_code_and_dump(self, tmp_path, capsys):
        scen = write_doc(tmp_path, blocked_doc())
        rc = cli.main(["plan", scen, "--out", str(tmp_path / "out")])
        assert rc == cli.EXIT_INFEASIBLE
        err = capsys.readouterr().err
        assert "infeasible" in err
        assert "refuted" in err

    def test_exact_method_records_plane_certificates(self, tmp_path):
        scen = write_doc(tmp_path, quadrant_doc())
        rc = cli.main(["plan", scen, "--method", "exact", "--out", str(tmp_path / "out")])
        assert rc == 0
        doc = json.loads((tmp_path / "out" / "plan.json").read_text())
        assert doc["plans"][0]["status"] == "success"
        assert doc["plans"][0]["certificates"]["type"] == "planes"

    def test_spline_overrides(self, tmp_path):
        scen = write_doc(tmp_path, quadrant_doc())
        rc = cli.main(["plan", scen, "--n", "9", "--d", "5", "--out", str(tmp_path / "out")])
        assert rc == 0
        doc = json.loads((tmp_path / "out" / "plan.json").read_text())
        assert doc["spline"] == {"n": 9, "d": 5}


class TestVerify:
    def test_report_from_saved_plan(self, tmp_path, capsys):
        scen = write_doc(tmp_path, quadrant_doc())
        out = str(tmp_path / "out")
        assert cli.main(["plan", scen, "--out", out]) == 0
        rc = cli.main(["verify", scen, "--plan", f"{out}/plan.json", "--out", out])
        assert rc == 0
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert report["min_obstacle_clearance"] > 0
        assert report["max_waypoint_error"] <= 1e-6
        # the tight corner gives a large heading jerk; FD truncation dominates
        assert report["max_dynamics_residual"] <= 1e-2
        assert report["samples"] >= 1000
        assert report["min_interagent_distance"] is None  # single agent
        assert "min_obstacle_clearance" in capsys.readouterr().out

    def test_violation_detected(self, tmp_path, capsys):
        free = dict(quadrant_doc())
        del free["hyperplanes"]
        del free["obstacles"]
        scen_free = write_doc(tmp_path, free, "free.json")
        out = str(tmp_path / "out")
        assert cli.main(["plan", scen_free, "--out", out]) == 0
        scen_full = write_doc(tmp_path, quadrant_doc(), "full.json")
        rc = cli.main(["verify", scen_full, "--plan", f"{out}/plan.json", "--out", out])
        assert rc == cli.EXIT_ERROR
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert report["min_obstacle_clearance"] < 0
        assert "violation" in capsys.readouterr().err


class TestPlot:
    def test_scene_elements_tagged(self, tmp_path):
        scen = write_doc(tmp_path, quadrant_doc())
        out = tmp_path / "out"
        assert cli.main(["plan", scen, "--out", str(out)]) == 0
        rc = cli.main(["plot", scen, "--plan", str(out / "plan.json"), "--out", str(out)])
        assert rc == 0
        ids = svg_ids(out / "plan.svg")
        assert ids.count("curve-0") == 1
        assert sum(1 for i in ids if i.startswith("obstacle-")) == 1
        assert sum(1 for i in ids if i.startswith("hyperplane-")) == 2
        assert "control-polygon-0" in ids
        # one hull per sliding window of d control points
        assert sum(1 for i in ids if i.startswith("hull-0-")) == 6 + 1 - 4 + 1
        assert "waypoints-0" in ids

    def test_empty_obstacles_one_curve_per_agent(self, tmp_path):
        scen = write_doc(tmp_path, corridor_doc())
        out = tmp_path / "out"
        rc = cli.main(["plot", scen, "--out", str(out)])
        assert rc == 0
        ids = svg_ids(out / "plan.svg")
        curves = [i for i in ids if re.fullmatch(r"curve-\d+", i)]
        assert sorted(curves) == ["curve-0", "curve-1"]
        assert not any(i.startswith("obstacle-") for i in ids)


class TestSweep:
    def test_csv_and_figure(self, tmp_path):
        scen = write_doc(tmp_path, quadrant_doc())
        out = tmp_path / "out"
        rc = cli.main(["sweep", scen, "--grid", "6", "8", "--out", str(out)])
        assert rc == 0
        with open(out / "sweep.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["n", "method", "length", "wall_time", "status"]
        assert len(rows) == 1 + 4
        methods = {(r[0], r[1]) for r in rows[1:]}
        assert methods == {("6", "MI"), ("6", "EX"), ("8", "MI"), ("8", "EX")}
        for r in rows[1:]:
            assert float(r[2]) > 0
        ids = svg_ids(out / "sweep.svg")
        assert "sweep-MI" in ids and "sweep-EX" in ids

    def test_infeasible_marked_with_star(self, tmp_path):
        scen = write_doc(tmp_path, slit_doc())
        out = tmp_path / "out"
        rc = cli.main(["sweep", scen, "--grid", "8", "--out", str(out)])
        assert rc == 0
        with open(out / "sweep.csv") as fh:
            rows = {(r[0], r[1]): r for r in list(csv.reader(fh))[1:]}
        assert rows[("8", "MI")][2] == "*"
        assert rows[("8", "MI")][4] == "infeasible"
        assert ("8", "EX") in rows


class TestErrors:
    def test_scenario_error_exit(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{\"version\": 1}")
        rc = cli.main(["plan", str(bad), "--out", str(tmp_path)])
        assert rc == cli.EXIT_ERROR
        assert "scenario error" in capsys.readouterr().err

    def test_unknown_method_rejected(self, tmp_path):
        scen = write_doc(tmp_path, quadrant_doc())
        with pytest.raises(SystemExit):
            cli.main(["plan", scen, "--method", "newton"])
