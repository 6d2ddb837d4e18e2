import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np
import pytest

from cmaring.cli import main
from cmaring.suites import SUITES, run_suites, vacuous

SPECS = Path(__file__).resolve().parent.parent / "specs"


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def _ball_spec(eps=0.05, **extra):
    d = {"ring": {"inner": {"kind": "ball", "center": [0, 0], "radius": 1.0},
                  "outer": {"kind": "ball", "center": [0, 0], "radius": math.e}},
         "solve": {"eps": eps, "resolution": 200}}
    d.update(extra)
    return d


# --- property suites -------------------------------------------------------------------------

def test_all_suites_pass_and_check_something():
    res = run_suites(trials=60, seed=7)
    assert [r.name for r in res] == list(SUITES)
    assert all(r.passed for r in res), [r.to_dict() for r in res if not r.passed]
    assert vacuous(res) == []


def test_fault_injection_is_caught():
    res = {r.name: r for r in run_suites(trials=40, seed=0, fault="takagi-skip-conj")}
    assert not res["takagi"].passed and res["takagi"].counterexample is not None


def test_suite_seeds_are_independent_of_selection():
    a = run_suites(trials=20, seed=3, names=["level_set"])[0]
    b = {r.name: r for r in run_suites(trials=20, seed=3)}["level_set"]
    assert a.to_dict() == b.to_dict()


def test_lemmas_exit_codes(tmp_path, capsys):
    assert main(["lemmas", "--trials", "30", "--json", str(tmp_path / "l.json")]) == 0
    assert len(json.loads((tmp_path / "l.json").read_text())) == len(SUITES)
    assert main(["lemmas", "--trials", "30", "--fault", "takagi-skip-conj"]) != 0
    assert main(["lemmas", "--trials", "0"]) == 0
    assert "vacuous" in capsys.readouterr().err
    assert main(["lemmas", "--trials", "-1"]) == 64


# --- solve / verify ----------------------------------------------------------------------------

def test_solve_then_verify(tmp_path):
    spec = _write(tmp_path / "s.json", _ball_spec())
    out = tmp_path / "run"
    assert main(["solve", spec, "--out", str(out)]) == 0
    rep = json.loads((out / "solve_report.json").read_text())
    assert rep["failure"] is None and rep["stages"][-1]["residual_inf"] <= 1e-8
    assert main(["verify", str(out / "field.json"), "--out", str(out / "v.json")]) == 0
    v = json.loads((out / "v.json").read_text())
    assert v["failed"] == 0 and {c["check"] for c in v["checks"]} >= {"sigma_max_principle", "level_sets"}


def test_solve_is_byte_deterministic(tmp_path):
    spec = _write(tmp_path / "s.json", _ball_spec())
    digests = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        assert main(["solve", spec, "--out", str(out)]) == 0
        digests.append(hashlib.sha256((out / "field.json").read_bytes()).hexdigest())
    assert digests[0] == digests[1]


def test_infeasible_eps_is_a_solver_failure(tmp_path):
    spec = _write(tmp_path / "s.json", _ball_spec(eps=0.2))
    out = tmp_path / "bad"
    assert main(["solve", spec, "--out", str(out)]) == 2
    assert json.loads((out / "solve_report.json").read_text())["failure"]


@pytest.mark.parametrize("spec", [
    {"ring": {}},
    {"solve": {"eps": 0.1}},
    dict(_ball_spec(), colour="red"),
    dict(_ball_spec(), solve={"eps": 0.1, "speed": 3}),
    dict(_ball_spec(), solve={"resolution": 100}),
    dict(_ball_spec(), solve={"eps": -1.0}),
    dict(_ball_spec(), tier="cubic"),
])
def test_bad_specs_are_usage_errors(tmp_path, spec):
    assert main(["solve", _write(tmp_path / "s.json", spec), "--out", str(tmp_path)]) == 64


def test_usage_errors(tmp_path):
    assert main(["solve", str(tmp_path / "missing.json")]) == 64
    assert main(["frobnicate"]) == 64
    assert main(["verify", str(SPECS / "log_ball.json"), "--checks", "bogus"]) == 64


def test_format_errors(tmp_path):
    p = tmp_path / "f.json"
    p.write_text("{not json")
    assert main(["verify", str(p)]) == 65
    p.write_text(json.dumps({"format": "something-else"}))
    assert main(["verify", str(p)]) == 65
    d = json.loads((SPECS / "log_ball.json").read_text())
    del d["ring"]
    assert main(["verify", _write(tmp_path / "noring.json", d)]) == 65


def test_inverted_ring_is_a_geometry_error(tmp_path):
    d = _ball_spec()
    d["ring"]["inner"]["radius"], d["ring"]["outer"]["radius"] = 3.0, 1.0
    assert main(["solve", _write(tmp_path / "s.json", d), "--out", str(tmp_path)]) == 3


def test_verify_analytic_field(tmp_path):
    assert main(["verify", str(SPECS / "log_ball.json"), "--out", str(tmp_path / "v.json")]) == 0


# --- leaf / gauge / subsolution / deform -------------------------------------------------------

def test_leaf_csv(tmp_path):
    out = tmp_path / "leaf.csv"
    assert main(["leaf", str(SPECS / "log_ball.json"), "--point", "0.6", "0.2", "1.1", "-0.3",
                 "--radius", "0.2", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert rows and set(rows[0]) == {"zeta_re", "zeta_im", "z1_re", "z1_im", "z2_re", "z2_im", "phi", "S", "Q"}


def test_leaf_point_arity(tmp_path):
    assert main(["leaf", str(SPECS / "log_ball.json"), "--point", "0.6", "0.2"]) == 64


def test_gauge_json(capsys):
    assert main(["gauge", str(SPECS / "log_ball.json"), "--point", "0", "0", "1", "0"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["A"][0][0][0] == pytest.approx(0.5) and d["sigma"] == pytest.approx(1.0)


def test_gauge_at_pole_and_critical_point(tmp_path):
    from cmaring import io
    from cmaring.field import AnalyticField
    assert main(["gauge", str(SPECS / "log_ball.json"), "--point", "0", "0", "0", "0"]) == 3
    path = tmp_path / "quad.json"
    io.write_json(path, io.field_file(AnalyticField.quadratic(np.eye(2))))
    assert main(["gauge", str(path), "--point", "0", "0", "0", "0"]) == 3
    assert main(["gauge", str(path), "--point", "0", "0", "1", "0"]) == 0


def test_subsolution_and_deform(tmp_path):
    spec = str(SPECS / "ellipsoid.json")
    assert main(["subsolution", spec, "--out", str(tmp_path / "sub.json")]) == 0
    assert json.loads((tmp_path / "sub.json").read_text())["valid"] is True
    assert main(["deform", spec, "--steps", "5", "--samples", "200", "--out", str(tmp_path / "d.json")]) == 0
    fam = json.loads((tmp_path / "d.json").read_text())["family"]
    assert len(fam) == 5 and fam[0]["t"] == 0.0
