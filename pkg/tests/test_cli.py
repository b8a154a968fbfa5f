import json
import math

import pytest

from stablesplit.cli import build_parser, clean, dumps, main, validate_report

CYL = "family = cylinder\nT = 8\nh = 0.05\nfiber_lengths = 0.8\ninit = tanh:1.0\n"
PLANE = "family = flat_box\nextents = 17, 17\nh = 0.25\n"


def run(out, *argv):
    code = main([*argv, "--out", str(out)])
    return code


def report(out, name):
    doc = json.loads((out / f"{name}.json").read_text())
    validate_report(doc)
    return doc


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = d / "cyl.cfg"
    cfg.write_text(CYL)
    assert run(d, "solve", "--config", str(cfg)) == 0
    assert run(d, "stability", "--solution", str(d / "solution.csv")) == 0
    return d


def test_solve_report(solved):
    doc = report(solved, "solve")
    assert doc["status"] == "ok" and doc["passed"]
    assert doc["payload"]["converged"]
    assert doc["tables"]["solution"] == "solution.csv"
    meta = json.loads((solved / "solve.meta.json").read_text())
    assert meta["report"] == "solve.json" and "created" in meta


def test_stability_report(solved):
    doc = report(solved, "stability")
    assert doc["passed"]
    assert doc["payload"]["positivity"] == "StrictlyPositive"
    assert (solved / "eigenfield.csv.json").exists()


@pytest.mark.parametrize("lemma", ["picone", "lemma32", "lemma34"])
def test_verify_lemmas(solved, tmp_path, lemma):
    sol = str(solved / "solution.csv")
    assert run(tmp_path, "verify", lemma, "--solution", sol, "--spectral", str(solved / "eigenfield.csv"),
               "--trials", "20") == 0
    doc = report(tmp_path, f"verify-{lemma}")
    assert doc["passed"], doc["verdicts"]
    assert doc["config"]["seed"] == 0


def test_verify_is_deterministic(solved, tmp_path):
    sol = str(solved / "solution.csv")
    spec = str(solved / "eigenfield.csv")
    texts = []
    for sub in ("a", "b"):
        assert run(tmp_path / sub, "verify", "picone", "--solution", sol, "--spectral", spec,
                   "--trials", "200", "--seed", "7") == 0
        texts.append((tmp_path / sub / "verify-picone.json").read_bytes())
    assert texts[0] == texts[1]


def test_split_report(solved, tmp_path):
    assert run(tmp_path, "split-report", "--solution", str(solved / "solution.csv"),
               "--spectral", str(solved / "eigenfield.csv")) == 0
    doc = report(tmp_path, "split-report")
    assert doc["passed"]
    for table in doc["tables"].values():
        assert (tmp_path / table).exists()


def test_growth_with_radii(solved, tmp_path):
    assert run(tmp_path, "growth", "--solution", str(solved / "solution.csv"), "--radii", "1.2,1.6,2,2.5,3.2,4,5") == 0
    doc = report(tmp_path, "growth")
    assert doc["passed"]


def test_growth_default_radii_too_short(solved, tmp_path):
    assert run(tmp_path, "growth", "--solution", str(solved / "solution.csv")) == 2
    doc = report(tmp_path, "growth")
    assert doc["status"] == "invalid_input" and doc["error"]["path"] == "radii"


def test_profile_command(tmp_path):
    assert run(tmp_path, "profile", "--T", "6", "--h", "0.01") == 0
    doc = report(tmp_path, "profile")
    assert doc["payload"]["monotone"]


def test_capacity_and_parabolicity(tmp_path):
    cfg = tmp_path / "plane.cfg"
    cfg.write_text(PLANE)
    assert run(tmp_path, "capacity", "--config", str(cfg), "--K", "ball:r=1", "--omega", "ball:r=8,open") == 0
    cap = report(tmp_path, "capacity")["payload"]["energy"]
    assert cap == pytest.approx(2 * math.pi / math.log(8), rel=0.06)
    for method in ("capacity", "growth"):
        assert run(tmp_path / method, "parabolicity", "--method", method, "--config", str(cfg), "--rmax", "16") == 0
        doc = report(tmp_path / method, "parabolicity")
        assert doc["payload"]["verdict"] == "Parabolic"


def test_theorem12_demo_default(tmp_path):
    assert run(tmp_path, "theorem12-demo") == 0
    doc = report(tmp_path, "theorem12-demo")
    assert doc["passed"], [v["name"] for v in doc["verdicts"] if not v["passed"]]
    assert set(doc["payload"]["stages"]) == {"solve", "stability", "splitting", "profile", "growth"}


# ------------------------------------------------------------------ failures
def test_missing_field_is_exit_2(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("family = cylinder\nT = 8\nh = 0.05\n")
    assert run(tmp_path, "solve", "--config", str(cfg)) == 2
    doc = report(tmp_path, "solve")
    assert doc["status"] == "invalid_input"
    assert doc["error"]["path"] == "config.fiber_lengths"


def test_bad_tols_file_is_exit_2(solved, tmp_path):
    tols = tmp_path / "tols.txt"
    tols.write_text("not_a_tol = 1\n")
    assert run(tmp_path, "growth", "--solution", str(solved / "solution.csv"), "--tols", str(tols)) == 2
    assert report(tmp_path, "growth")["error"]["path"] == "tols.not_a_tol"


def test_non_convergence_is_exit_3(tmp_path):
    cfg = tmp_path / "cyl.cfg"
    cfg.write_text(CYL)
    assert run(tmp_path, "solve", "--config", str(cfg), "--max-iter", "1") == 3
    doc = report(tmp_path, "solve")
    assert doc["status"] == "numerical_failure"
    assert doc["error"]["type"] == "NumericalFailure"
    assert not doc["passed"]


@pytest.mark.parametrize("argv", [["bogus"], ["verify", "lemma99", "--solution", "x"], ["solve"]])
def test_usage_errors_exit_2(tmp_path, argv):
    with pytest.raises(SystemExit) as info:
        main(argv + ["--out", str(tmp_path)])
    assert info.value.code == 2


def test_every_command_has_help():
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    assert set(sub.choices) == {"solve", "stability", "verify", "split-report", "capacity", "parabolicity",
                                "profile", "growth", "theorem12-demo"}


def test_clean_serializes_non_finite():
    doc = clean({"a": float("inf"), "b": [float("nan"), -float("inf")], "c": 1})
    assert doc == {"a": "inf", "b": ["nan", "-inf"], "c": 1}
    assert json.loads(dumps(doc)) == doc
