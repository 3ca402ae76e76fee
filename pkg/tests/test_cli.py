import json

import numpy as np
import pytest

from cknlab.cli import main
from cknlab.grid import sample


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_exponents_command(capsys):
    code, out, err = run_cli(capsys, "exponents")
    assert code == 0
    payload = json.loads(out)
    assert payload["exponents"]["two_sharp"] == 4.0
    assert payload["params"]["N"] == 3


def test_exponents_quiet(capsys):
    code, out, _ = run_cli(capsys, "exponents", "--quiet")
    assert code == 0
    payload = json.loads(out)
    assert "two_sharp" in payload and "params" not in payload


def test_validation_exit_code(capsys):
    code, out, err = run_cli(capsys, "exponents", "--set", "a=0.6")
    assert code == 2
    assert out == ""
    msg = json.loads(err)
    assert msg["error"] == "WeightOutOfRange"


def test_constants_deterministic_and_diagnostic(capsys):
    code1, out1, _ = run_cli(capsys, "constants", "--seed", "0")
    code2, out2, _ = run_cli(capsys, "constants", "--seed", "0")
    assert code1 == code2 == 0
    assert out1 == out2
    payload = json.loads(out1)
    assert "S_eps_invariance" in payload
    assert payload["thresholds"]["beta1"] > 0
    assert payload["C_ab_detail"]["label"] == "estimated"


def test_constants_eps_list_override(capsys):
    code, out, _ = run_cli(capsys, "constants", "--eps-list", "0.7,1.4")
    assert code == 0
    payload = json.loads(out)
    assert len(payload["S_eps_invariance"]) == 2


def test_constants_numeric_failure_exit_code(capsys):
    code, out, err = run_cli(capsys, "constants", "--set", "grid.s_min=-2",
                             "--set", "grid.s_max=2", "--set", "grid.n=128")
    assert code == 3
    assert json.loads(err)["error"] == "QuadratureDivergence"


def test_region_map_stdout_and_files(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "region-map", "--N", "3", "--resolution", "25",
                           "--output-dir", str(tmp_path))
    assert code == 0
    lines = out.strip().split("\n")
    assert lines[0] == "a,b,case,q_c,L3_discriminant"
    assert len(lines) == 1 + 25 * 25
    assert (tmp_path / "region_map_N3.csv").exists()
    assert (tmp_path / "region_map_N3.png").exists()


def test_region_map_no_figures(capsys, tmp_path):
    code, _, _ = run_cli(capsys, "region-map", "--N", "3", "--resolution", "10",
                         "--no-figures", "--output-dir", str(tmp_path))
    assert code == 0
    assert not (tmp_path / "region_map_N3.png").exists()


def test_fiber_command(capsys, tmp_path, grid_default, p0):
    from cknlab.functionals import mass_sq
    u = sample(grid_default, lambda r: np.exp(-r ** 2))
    u = u.scaled(1.0 / mass_sq(u, 0.25) ** 0.5)
    path = tmp_path / "prof.csv"
    u.to_csv(path)
    code, out, _ = run_cli(capsys, "fiber", "--profile", str(path),
                           "--set", "beta=0.4")
    assert code == 0
    payload = json.loads(out)
    assert len(payload["criticals"]) == 2
    assert payload["criticals"][0]["branch"] == "plus"
    assert payload["regime"] == "subcritical"


def test_asymptotics_command(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "asymptotics", "--quantity", "MassSq",
                           "--output-dir", str(tmp_path))
    assert code == 0
    payload = json.loads(out)
    assert payload["predicted_exponent"] == 1.0
    assert abs(payload["fitted_slope"] - 1.0) < 0.1
    assert (tmp_path / "asymptotics_MassSq.png").exists()


def test_asymptotics_poor_fit_exit(capsys, tmp_path):
    code, _, err = run_cli(capsys, "asymptotics", "--quantity", "MassSq",
                           "--eps-list", "0.1,0.2,0.4,0.8,1.6,3.2",
                           "--no-figures", "--output-dir", str(tmp_path))
    assert code == 3
    assert json.loads(err)["error"] == "PoorFit"


def test_solve_and_gap_check(capsys, tmp_path):
    code, out, _ = run_cli(
        capsys, "solve", "--branch", "plus", "--output-dir", str(tmp_path),
        "--set", "beta=1.0", "--set", "solver.max_iters=250")
    assert code == 0
    payload = json.loads(out)
    assert payload["report"]["converged"] is True
    assert payload["report"]["energy"] < 0.0
    prof = tmp_path / "solution_plus.csv"
    assert prof.exists()
    assert (tmp_path / "solution_plus.png").exists()

    code2, out2, _ = run_cli(capsys, "gap-check", "--ground", str(prof),
                             "--set", "beta=1.0", "--eps", "1e-3",
                             "--output-dir", str(tmp_path))
    assert code2 == 0
    gap = json.loads(out2)
    names = {c["name"]: c["holds"] for c in gap["gap"]["bound_checks"]}
    assert names["gap_bound"] is True


def test_solve_nonconvergence_exit(capsys, tmp_path):
    code, _, err = run_cli(
        capsys, "solve", "--branch", "plus", "--no-constants",
        "--output-dir", str(tmp_path), "--set", "beta=1.0",
        "--set", "solver.max_iters=4", "--set", "solver.newton_polish=0")
    assert code == 4
    assert json.loads(err)["error"] == "NoConvergence"


def test_sweep_command(capsys, tmp_path):
    code, out, _ = run_cli(
        capsys, "sweep", "--vary", "beta", "--values", "0.3,0.6",
        "--task", "minimize_plus", "--threads", "1",
        "--output-dir", str(tmp_path), "--set", "solver.max_iters=80")
    assert code == 0
    lines = out.strip().split("\n")
    assert lines[0] == "param_value,task,converged,energy,lambda,pohozaev,el_residual,mass_sq,iterations,error"
    assert len(lines) == 3
    assert (tmp_path / "sweep_beta_minimize_plus.csv").exists()


def test_sweep_empty_values(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "sweep", "--vary", "beta", "--values", "",
                           "--task", "minimize_plus", "--no-figures",
                           "--output-dir", str(tmp_path))
    assert code == 0
    assert out.strip() == "param_value,task,converged,energy,lambda,pohozaev,el_residual,mass_sq,iterations,error"


def test_output_dir_env_fallback(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("CKN_OUTPUT_DIR", str(tmp_path / "envout"))
    code, _, _ = run_cli(capsys, "region-map", "--N", "3", "--resolution", "8",
                         "--no-figures")
    assert code == 0
    assert (tmp_path / "envout" / "region_map_N3.csv").exists()


def test_gap_check_postcondition_violation_exit(capsys, tmp_path):
    code, out, _ = run_cli(
        capsys, "solve", "--branch", "plus", "--output-dir", str(tmp_path),
        "--set", "beta=1.0", "--set", "solver.max_iters=250")
    assert code == 0
    prof = tmp_path / "solution_plus.csv"
    # forcing an absurdly low ground level makes the gap bound fail: the
    # payload is still printed and the command exits 3
    code2, out2, err2 = run_cli(capsys, "gap-check", "--ground", str(prof),
                                "--set", "beta=1.0", "--eps", "1e-2",
                                "--m-level=-0.5", "--output-dir", str(tmp_path))
    assert code2 == 3
    assert json.loads(err2)["error"] == "PostconditionViolated"
    payload = json.loads(out2)
    names = {c["name"]: c["holds"] for c in payload["gap"]["bound_checks"]}
    assert names["gap_bound"] is False
