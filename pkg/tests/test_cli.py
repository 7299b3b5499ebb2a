import csv
import json
from pathlib import Path

import numpy as np
import pytest

from phinonlocal import ConfigError, load_scenario, read_csv
from phinonlocal.cli import main, run_sweep

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

BASE = """
name = "t"
class = "sublinear_scalar"
[operator]
kind = "power_law"
p = 2.0
[exponents]
alpha = 0.3
beta = 0.3
[mesh]
counts = 201
"""


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_solve_bundled_example(tmp_path):
    out = tmp_path / "o"
    assert main(["solve", str(CONFIGS / "ps_p2.toml"), "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["converged"] is True and rep["certified"] is True
    assert rep["final_residual"] <= 1e-7
    trace = rows(out / "trace.csv")
    assert list(trace[0]) == ["step", "sup_diff", "norm_psi", "norm_lambda", "residual"]
    pts, vals = read_csv(out / "solution.csv")
    assert len(vals) == 801 and vals[0] == 0.0


def test_report_is_deterministic(tmp_path):
    cfg = write(tmp_path, BASE)
    assert main(["solve", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["solve", str(cfg), "--out", str(tmp_path / "b")]) == 0
    for f in ("report.json", "trace.csv", "solution.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_hypothesis_violation_exit_2(tmp_path):
    cfg = write(tmp_path, BASE.replace("beta = 0.3", "beta = 0.8"))
    assert main(["solve", str(cfg), "--out", str(tmp_path / "o")]) == 2
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["error"]["type"] == "HypothesisViolation"


def test_experimental_run_exit_2(tmp_path):
    out = tmp_path / "o"
    assert main(["solve", str(CONFIGS / "superlinear_experiment.toml"), "--out", str(out)]) == 2
    rep = json.loads((out / "report.json").read_text())
    assert rep["experimental"]["certified"] is False
    assert (out / "trace.csv").exists()


def test_iteration_failure_exit_3(tmp_path):
    cfg = write(tmp_path, BASE)
    assert main(["solve", str(cfg), "--out", str(tmp_path / "o"), "--max-steps", "2"]) == 3
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["error"]["type"] == "MaxStepsExceeded"


def test_verify_only(tmp_path):
    cfg = write(tmp_path, BASE)
    assert main(["verify", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["certified"] is True and "iteration" not in rep


@pytest.mark.parametrize(
    "text",
    [
        "class = 'nope'",
        BASE.replace("counts = 201", "counts = 2"),
        BASE.replace("p = 2.0", "p = 'two'"),
        BASE + "[sweep]\nlambda = [1.0, 0.5, 3]\n",
        BASE.replace("[mesh]", "[params]\ntheta = 1.0\n[mesh]"),
        BASE + "[solver]\nwarp = 9\n",
        "name = 'broken\n",
    ],
)
def test_config_errors_exit_1(tmp_path, text):
    cfg = write(tmp_path, text)
    assert main(["solve", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_parse_error_has_line_info(tmp_path):
    cfg = write(tmp_path, BASE + "\n[mesh\n")
    with pytest.raises(ConfigError, match="line"):
        load_scenario(cfg)


def test_empty_sweep_range_is_config_error(tmp_path):
    cfg = write(tmp_path, BASE)
    assert main(["sweep", str(cfg), "--axis", "lambda", "--out", str(tmp_path / "o")]) == 1


def test_lambda_sweep_rows(tmp_path):
    cfg = write(tmp_path, BASE + "[sweep]\nlambda = [0.5, 2.0, 3]\n")
    out = tmp_path / "o"
    assert main(["sweep", str(cfg), "--axis", "lambda", "--out", str(out)]) == 0
    table = rows(out / "sweep.csv")
    assert [float(r["lambda"]) for r in table] == [0.5, 1.25, 2.0]
    assert all(r["certified"] == "true" and r["converged"] == "true" for r in table)


def test_mesh_sweep_order(tmp_path):
    sc = load_scenario(CONFIGS / "ps_p2_coarse.toml")
    table = run_sweep(sc, "mesh", tmp_path)
    assert [r["counts"] for r in table] == [[101], [201], [401]]
    assert table[-1]["order"] >= 1.8


def test_theta_sweep_flips_at_threshold(tmp_path):
    sc = load_scenario(CONFIGS / "cc_fix_lambda.toml")
    table = run_sweep(sc, "theta", tmp_path)
    theta0 = table[0]["theta0"]
    verdicts = [r["certified"] for r in table]
    flip = verdicts.index(False)
    assert all(verdicts[:flip]) and not any(verdicts[flip:])
    assert table[flip - 1]["theta"] < theta0 <= table[flip]["theta"]
    assert all("M" in r and "psi_at_M" in r for r in table)


def test_system_outputs(tmp_path):
    out = tmp_path / "o"
    assert main(["solve", str(CONFIGS / "system_sublinear.toml"), "--out", str(out)]) == 0
    for f in ("trace.csv", "trace_2.csv", "solution.csv", "solution_2.csv"):
        assert (out / f).exists()


def test_torsion_study(tmp_path):
    out = tmp_path / "o"
    assert main(["solve", str(CONFIGS / "torsion_powersum.toml"), "--out", str(out)]) == 0
    table = rows(out / "study.csv")
    assert list(table[0]) == ["lambda", "max_z", "fitted_slope"]
    assert [float(r["lambda"]) for r in table] == pytest.approx([1, 10, 100, 1000])
    for r in table:
        assert 0.5 - 1e-2 <= float(r["fitted_slope"]) <= 1.0 + 1e-2
    assert json.loads((out / "report.json").read_text())["slopes_within_envelope"] is True


def test_norm_study(tmp_path):
    out = tmp_path / "o"
    assert main(["solve", str(CONFIGS / "norm_study.toml"), "--out", str(out)]) == 0
    table = rows(out / "study.csv")
    assert all(r["sandwich_holds"] == "true" for r in table)
    assert all(abs(float(r["modular_at_norm"]) - 1) <= 1e-10 for r in table)


@pytest.mark.parametrize("name", sorted(p.stem for p in CONFIGS.glob("*.toml")))
def test_bundled_configs_parse(name):
    sc = load_scenario(CONFIGS / f"{name}.toml")
    assert sc.spec.n_equations == (2 if sc.is_system else 1)
