import copy
import json
import subprocess
import sys

import jsonschema
import pytest

from conftest import DEMO_MODELS
from ergobound import __version__
from ergobound.cli import EXIT_ERROR, EXIT_NOT_ERGODIC, EXIT_OK, main, report_schema, validate_report


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    report = json.loads(out) if out.strip().startswith("{") else None
    return code, report, err


def verdicts(report):
    return {v["name"]: v for v in report["verdicts"]}


@pytest.fixture
def two_state_file():
    return DEMO_MODELS / "two_state.json"


# -- bounds ------------------------------------------------------------------

def test_bounds_birth_death(capsys):
    code, rep, _ = run(["bounds", DEMO_MODELS / "bd_quadratic.json"], capsys)
    assert code == EXIT_OK and rep["status"] == "ok"
    b = rep["bounds"]
    assert b["kappa_equals_lambda1"]
    assert b["S"] == pytest.approx(0.68700679167078882, rel=1e-10)
    assert b["delta"] == pytest.approx(0.27958530233606727, rel=1e-10)
    assert b["lambda1_lower"] <= b["lambda1_upper"]
    assert rep["model"]["params_digest"].startswith("sha256:")
    assert rep["provenance"]["version"] == __version__


def test_bounds_tc_stable(capsys):
    import math
    code, rep, _ = run(["bounds", DEMO_MODELS / "tc_stable.json"], capsys)
    assert code == EXIT_OK
    omega = -2 / (math.cos(0.75 * math.pi) * math.gamma(1.5))
    # I = 2 B(1.5, 0.5) = pi for a = (1 + |x|)^2
    assert rep["bounds"]["kappa_lower"] == pytest.approx(1 / (omega * math.pi), rel=1e-8)


@pytest.mark.parametrize("name", ["two_state", "quartic_diffusion", "stable_cubic", "radial", "tree_binary"])
def test_bounds_every_family(capsys, name):
    code, rep, _ = run(["bounds", DEMO_MODELS / f"{name}.json"], capsys)
    assert code == EXIT_OK
    validate_report(rep)


def test_not_strongly_ergodic_exit(capsys):
    code, rep, _ = run(["bounds", DEMO_MODELS / "ou.json"], capsys)
    assert code == EXIT_NOT_ERGODIC
    assert rep["status"] == "not_strongly_ergodic" and rep["bounds"] is None


def test_malformed_model_positioned(capsys):
    code, rep, err = run(["bounds", DEMO_MODELS / "bad.json"], capsys)
    assert code == EXIT_ERROR and rep is None
    assert "death" in err and "error" in err


def test_invalid_json_positioned(tmp_path, capsys):
    p = tmp_path / "m.json"
    p.write_text('{"family": "birth_death",\n  "birth": }')
    code, _, err = run(["bounds", p], capsys)
    assert code == EXIT_ERROR
    assert f"{p}:2:" in err


def test_missing_file(capsys):
    code, _, err = run(["bounds", "/nonexistent/model.json"], capsys)
    assert code == EXIT_ERROR and err


def test_tolerance_overrides_echoed(capsys):
    _, rep, _ = run(["bounds", DEMO_MODELS / "bd_quadratic.json", "--tol-rel", "1e-7", "--tol-abs", "1e-13"], capsys)
    tol = rep["provenance"]["tolerance"]
    assert tol["rel"] == 1e-7 and tol["abs"] == 1e-13


def test_out_and_csv(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["bounds", str(DEMO_MODELS / "two_state.json"), "--out", str(out)]) == EXIT_OK
    validate_report(json.loads(out.read_text()))
    csv_out = tmp_path / "r.csv"
    main(["bounds", str(DEMO_MODELS / "two_state.json"), "--format", "csv", "--out", str(csv_out)])
    lines = csv_out.read_text().splitlines()
    assert lines[0] == "key,value" and any(l.startswith("bounds.S,") for l in lines)


# -- schema ------------------------------------------------------------------

def test_schema_rejects_unknown_fields(capsys):
    _, rep, _ = run(["bounds", DEMO_MODELS / "two_state.json"], capsys)
    for path in ([], ["model"], ["provenance"]):
        bad = copy.deepcopy(rep)
        node = bad
        for k in path:
            node = node[k]
        node["surprise"] = 1
        with pytest.raises(jsonschema.ValidationError):
            validate_report(bad)
    bad = copy.deepcopy(rep)
    bad["verdicts"].append({"name": "x", "passed": True, "level": "check", "margin": None, "detail": "", "extra": 0})
    with pytest.raises(jsonschema.ValidationError):
        validate_report(bad)


def test_schema_is_valid_draft():
    jsonschema.Draft202012Validator.check_schema(report_schema())


# -- verify ------------------------------------------------------------------

def test_verify_two_state(tmp_path, capsys):
    out = tmp_path / "v.json"
    code = main(["verify", str(DEMO_MODELS / "two_state.json"), "--out", str(out)])
    rep = json.loads(out.read_text())
    assert code == EXIT_OK and rep["status"] == "ok"
    ver = rep["verification"]
    assert ver["gap"] == pytest.approx(2.0, rel=1e-12)
    assert ver["tv"]["kappa_empirical"] == pytest.approx(2.0, abs=1e-6)
    assert all(v["passed"] for v in rep["verdicts"])
    csv_path = ver["tv"]["decay_csv"]
    assert csv_path and open(csv_path).readline().startswith("t,tv_sup")


def test_verify_tree(capsys):
    code, rep, _ = run(["verify", DEMO_MODELS / "tree_binary.json", "--truncate", "40"], capsys)
    assert code == EXIT_OK
    assert all(v["passed"] for v in rep["verdicts"])


def test_verify_times_grid(capsys):
    code, rep, _ = run(["verify", DEMO_MODELS / "two_state.json", "--times", "geom:0.1:2:5"], capsys)
    assert code == EXIT_OK and len(rep["verification"]["tv"]["times"]) == 5


def test_verify_small_truncation_warns(capsys):
    code, rep, _ = run(["verify", DEMO_MODELS / "bd_quadratic.json", "--truncate", "4"], capsys)
    assert code == EXIT_OK
    assert rep["status"] == "flagged"
    v = verdicts(rep)["oracle_gap_cauchy"]
    assert not v["passed"] and v["level"] == "warning"


def test_verify_quartic_gap(capsys):
    code, rep, _ = run(["verify", DEMO_MODELS / "quartic_diffusion.json", "--mesh", "1e-3", "--length", "4",
                        "--expect-gap", "2.4"], capsys)
    assert code == EXIT_OK
    v = verdicts(rep)
    assert v["oracle_gap_ge_expected"]["passed"]
    assert v["oracle_gap_cauchy"]["passed"]
    assert rep["verification"]["gap"] >= 2.4


def test_verify_rejects_stable(capsys):
    code, _, err = run(["verify", DEMO_MODELS / "stable_cubic.json"], capsys)
    assert code == EXIT_ERROR and err


def test_bad_times(capsys):
    code, _, _ = run(["verify", DEMO_MODELS / "two_state.json", "--times", "1,0.5"], capsys)
    assert code == EXIT_ERROR


# -- simulate ----------------------------------------------------------------

def test_simulate_two_state(capsys):
    code, rep, _ = run(["simulate", DEMO_MODELS / "two_state.json", "--trials", "100000", "--seed", "3"], capsys)
    assert code == EXIT_OK
    est = rep["montecarlo"]["estimate"]
    assert abs(est["mean"] - 1.0) <= 3 * est["std_error"]
    assert verdicts(rep)["mc_mean_matches_solve"]["passed"]


def test_simulate_seed_repetition(capsys, monkeypatch):
    args = ["simulate", DEMO_MODELS / "bd_quadratic.json", "--trials", "2000", "--seed", "42"]
    _, a, _ = run(args, capsys)
    _, b, _ = run(args, capsys)
    assert a == b
    monkeypatch.setenv("ERGO_SEED", "42")
    _, c, _ = run(args[:-2], capsys)
    assert c == a


def test_simulate_censoring_flag(tmp_path, capsys):
    p = tmp_path / "slow.json"
    p.write_text(json.dumps({"family": "birth_death", "params": {"birth": "1", "death": "0.01", "size": 2}}))
    code, rep, _ = run(["simulate", p, "--trials", "2000", "--horizon", "1"], capsys)
    assert code == EXIT_OK and rep["status"] == "flagged"
    assert not verdicts(rep)["censoring_below_1pct"]["passed"]
    assert rep["montecarlo"]["estimate"]["flagged"]


def test_simulate_diffusion(capsys):
    code, rep, _ = run(["simulate", DEMO_MODELS / "quartic_diffusion.json", "--trials", "2000", "--dt", "1e-4",
                        "--hit", "1.0", "--start", "1.5"], capsys)
    assert code == EXIT_OK
    assert rep["montecarlo"]["method"] == "euler_maruyama"
    assert verdicts(rep)["mc_mean_le_M_r"]["passed"]


def test_simulate_not_ergodic(capsys):
    code, rep, _ = run(["simulate", DEMO_MODELS / "ou.json", "--trials", "500", "--dt", "1e-2"], capsys)
    assert code == EXIT_NOT_ERGODIC


# -- entry point -------------------------------------------------------------

def test_console_module():
    res = subprocess.run([sys.executable, "-m", "ergobound.cli", "bounds", str(DEMO_MODELS / "two_state.json")],
                         capture_output=True, text=True)
    assert res.returncode == 0
    validate_report(json.loads(res.stdout))
