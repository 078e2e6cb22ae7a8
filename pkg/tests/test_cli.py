import csv
import hashlib
import io
import json
from pathlib import Path

import pytest

from shockflow.cli import main

ROOT = Path(__file__).resolve().parent.parent
SCEN = ROOT / "scenarios"
DATA = Path(__file__).resolve().parent / "data"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_admissible_command(capsys):
    code, out, _ = run(capsys, "admissible", "--scenario", SCEN / "burgers_shock.json")
    assert code == 0
    data = json.loads(out)
    assert data["v_star"] == pytest.approx([0.0], abs=1e-12)
    assert data["classification"] == "restraining"
    assert set(data) >= {"v_star", "p_star", "active_set", "weights", "objective", "classification", "meta"}
    raw = (SCEN / "burgers_shock.json").read_bytes()
    assert data["meta"]["scenario_sha256"] == hashlib.sha256(raw).hexdigest()
    assert data["meta"]["command"] == "admissible"


def test_admissible_nonrestraining(capsys):
    code, out, _ = run(capsys, "admissible", "--scenario", SCEN / "obtuse_triple.json")
    data = json.loads(out)
    assert code == 0
    assert data["v_star"] == pytest.approx([1.0, 0.0], abs=1e-10)
    assert data["active_set"] == [1, 2]
    assert data["classification"] == "nonrestraining"


def test_field_command_csv(capsys, tmp_path):
    code, out, _ = run(capsys, "field", "--scenario", SCEN / "burgers_shock.json", "--grid", "5", "--t", "1.0")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["x0"] for r in rows] == ["-2", "-1", "0", "1", "2"]
    mid = rows[2]
    assert float(mid["phi"]) == pytest.approx(-0.5)
    assert mid["branch_count"] == "2" and mid["class"] == "shock(2)"
    assert rows[0]["class"] == "regular"
    code, _, _ = run(capsys, "field", "--scenario", SCEN / "burgers_shock.json", "--grid", "5", "--out", tmp_path)
    assert (tmp_path / "field.csv").read_text() == out


def test_field_command_json(capsys):
    code, out, _ = run(capsys, "field", "--scenario", SCEN / "triple_point.json", "--grid", "3,3", "--format", "json")
    assert code == 0
    data = json.loads(out)
    assert data["columns"] == ["x0", "x1", "phi", "branch_count", "class"]
    assert len(data["rows"]) == 9


def test_viscous_command(capsys, tmp_path):
    code, out, _ = run(capsys, "viscous", "--scenario", SCEN / "moving_shock.json", "--mu", "0.2,0.1", "--out", tmp_path)
    assert code == 0
    study = json.loads((tmp_path / "study.json").read_text())
    assert [r["mu"] for r in study["rows"]] == [0.2, 0.1]
    with open(tmp_path / "field.csv") as fh:
        assert next(csv.reader(fh)) == ["mu", "t", "x0", "phi"]
    with open(tmp_path / "trajectory.csv") as fh:
        assert next(csv.reader(fh)) == ["mu", "t", "x0"]


def test_weak_noise_is_deterministic(capsys, tmp_path, monkeypatch):
    args = ["weak-noise", "--scenario", SCEN / "counterexample.json", "--paths", "1500", "--seed", "7"]
    outs = []
    for threads, sub in (("4", "a"), ("1", "b")):
        monkeypatch.setenv("SHOCKFLOW_THREADS", threads)
        code, out, _ = run(capsys, *args, "--out", tmp_path / sub)
        assert code == 0
        outs.append(out)
    assert outs[0] == outs[1]
    assert (tmp_path / "a" / "path.csv").read_bytes() == (tmp_path / "b" / "path.csv").read_bytes()
    data = json.loads(outs[0])
    assert data["occupation"]["in_hull"]
    assert len(data["self_consistent"]) == 3


def test_counterexample_command(capsys):
    code, out, _ = run(capsys, "counterexample")
    assert code == 0
    data = json.loads(out)
    v = sorted(w["v_dagger"] for w in data["self_consistent"])
    assert v == [pytest.approx(e, abs=1e-12) for e in ([-0.5, 0, 0], [0, 0, 0], [0.5, 0, 0])]
    code2, out2, _ = run(capsys, "counterexample")
    assert out2 == out


def test_perturb_command(capsys):
    code, out, _ = run(capsys, "perturb", "--scenario", SCEN / "perturb_midpoint.json")
    assert code == 0
    data = json.loads(out)
    assert data["acceleration"] == pytest.approx([0.5, 0.0], abs=1e-6)
    assert data["index_sets"] == {"first_order": [1, 2], "second_order": [1, 2]}
    assert len(data["F_samples"]) == 8
    assert set(data) >= {"F_samples", "index_sets", "acceleration", "support_history"}


def test_malformed_scenario_exit_code(capsys):
    code, _, err = run(capsys, "admissible", "--scenario", DATA / "malformed.json")
    assert code == 2
    assert "line 3 column" in err


@pytest.mark.parametrize("payload", [
    {"name": "x", "hamiltonian": {"kind": "banana"}, "branches": {"branches": [{"p": [1.0]}]}},
    {"name": "x", "hamiltonian": {"kind": "quadratic"}, "extra_key": 1},
    {"name": "x", "hamiltonian": {"kind": "quadratic"}},
    [1, 2, 3],
])
def test_schema_errors_exit_two(capsys, tmp_path, payload):
    p = tmp_path / "s.json"
    p.write_text(json.dumps(payload))
    code, _, err = run(capsys, "admissible", "--scenario", p)
    assert code == 2
    assert "schema error" in err


def test_missing_scenario_exit_two(capsys, tmp_path):
    assert run(capsys, "admissible", "--scenario", tmp_path / "nope.json")[0] == 2
    assert run(capsys, "admissible")[0] == 2
    assert run(capsys, "viscous", "--scenario", SCEN / "obtuse_triple.json")[0] == 2


def test_numerical_failure_exit_three(capsys, tmp_path):
    # the third velocity crosses out of the ball between the step sizes
    p = tmp_path / "unstable.json"
    p.write_text(json.dumps({
        "name": "unstable", "hamiltonian": {"kind": "quadratic", "A": [[1.0]]},
        "branches": {"t": 0.0, "x": [0.0], "branches": [{"p": [-1.0]}, {"p": [1.0]}, {"p": [0.9988]}]},
        "perturbation": {"velocity_rates": [[0.0], [0.0], [0.3]]},
    }))
    code, _, err = run(capsys, "perturb", "--scenario", p)
    assert code == 3
    assert "SupportUnstable" in err
