import math

import numpy as np
import pytest

from cknlab.errors import BranchAbsent
from cknlab.fiber import analyze_fiber
from cknlab.functionals import lambda_identity, mass_sq
from cknlab.solver import (
    SWEEP_COLUMNS,
    SolverConfig,
    energy_gap_check,
    minimize_minus,
    minimize_plus,
    sweep,
)


def test_ground_state_contract(p0, constants_p0, ground_state_p0):
    p_run, rep = ground_state_p0
    assert rep.converged
    assert rep.energy < 0.0
    assert rep.lam < 0.0
    assert abs(rep.pohozaev) <= 1e-8 * rep.grad_norm ** 2
    assert rep.el_residual <= 1e-4
    assert abs(rep.mass_sq - p_run.rho ** 2) <= 1e-8
    assert rep.grad_norm < rep.diagnostics["kappa_tilde"]
    assert rep.diagnostics["energy_monotone"]


def test_ground_state_multiplier_identity(ground_state_p0):
    p_run, rep = ground_state_p0
    lam_r, lam_p = lambda_identity(rep.profile, p_run)
    assert abs(lam_r - lam_p) <= 1e-3 * abs(lam_r)
    assert lam_r < 0.0 and lam_p < 0.0


def test_ground_state_profile_positive_and_plus_branch(ground_state_p0):
    p_run, rep = ground_state_p0
    vals = rep.profile.values
    assert np.all(vals >= 0.0)
    core = (rep.profile.grid.r > 1e-6) & (rep.profile.grid.r < 10.0)
    assert np.all(vals[core] > 0.0)
    fr = analyze_fiber(rep.profile, p_run)
    plus = [c for c in fr.criticals if c.branch == "plus"]
    assert plus and min(abs(c.t) for c in plus) < 1e-6


def test_plus_branch_absent_supercritical(p0, grid_solver):
    with pytest.raises(BranchAbsent):
        minimize_plus(p0.replace(q=3.0, beta=1.0),
                      SolverConfig(branch="plus", max_iters=10), grid_solver)


def test_mass_critical_level_bracket(mass_critical_run):
    p_run, consts, rep, level = mass_critical_run
    assert rep.converged
    assert rep.lam < 0.0
    checks = {c.name: c for c in level.bound_checks}
    assert checks["level_positive"].holds
    assert checks["level_below_bubble_threshold"].holds
    cap = checks["level_below_bubble_threshold"].rhs
    assert 0.0 < level.level_value < cap
    fr = analyze_fiber(rep.profile, p_run)
    assert len(fr.criticals) == 1 and fr.criticals[0].branch == "minus"


def test_supercritical_level_bracket(supercritical_run):
    p_run, consts, rep, level = supercritical_run
    assert rep.converged
    assert rep.lam < 0.0
    checks = {c.name: c for c in level.bound_checks}
    assert checks["level_positive"].holds
    assert checks["level_below_bubble_threshold"].holds


def test_beta_zero_level_probe(beta_zero_run, constants_p0):
    p_run, rep, level = beta_zero_run
    cap = 0.75 / 3.0 * constants_p0.S_ab ** 2
    checks = {c.name: c for c in level.bound_checks}
    assert checks["level_matches_bubble_threshold_2pc"].holds
    assert abs(level.level_value - cap) / cap < 0.02
    # with the coefficient off the multiplier identity gives lam ~ 0
    assert rep.lam_pohozaev == 0.0


def test_energy_gap_inequality(ground_state_p0, constants_p0, grid_solver):
    p_run, rep = ground_state_p0
    gap = energy_gap_check(p_run, rep, eps=1e-3, grid=grid_solver,
                           constants=constants_p0)
    checks = {c.name: c for c in gap.bound_checks}
    assert checks["family_identity_at_zero"].holds
    assert checks["gap_bound"].holds
    assert gap.diagnostics["margin"] > 0.0
    assert gap.diagnostics["max_mass_drift"] < 1e-8


def test_energy_gap_margin_trend(ground_state_p0, constants_p0, grid_solver):
    # margin shrinks as eps grows toward 1
    p_run, rep = ground_state_p0
    margins = []
    for eps in (1e-3, 1e-2, 1e-1):
        gap = energy_gap_check(p_run, rep, eps=eps, grid=grid_solver,
                               constants=constants_p0)
        margins.append(gap.diagnostics["margin"])
    assert margins[0] > margins[-1]


def test_sweep_rows_and_error_capture(p0, grid_solver):
    cfg = SolverConfig(max_iters=60, require_convergence=False)
    values = [0.2, 0.4, 9999.0]
    rows = sweep(p0, "beta", values, "minimize_plus", cfg, grid_solver, threads=1)
    assert len(rows) == 3
    assert all(set(SWEEP_COLUMNS) == set(r) for r in rows)
    assert rows[0]["error"] == "" and rows[0]["energy"] < 0.0
    assert rows[2]["error"] == "BranchAbsent"


def test_sweep_energy_decreasing_in_beta(p0, constants_p0, grid_solver):
    b1 = constants_p0.thresholds.beta1
    cfg = SolverConfig(require_convergence=False)
    rows = sweep(p0, "beta", [0.3 * b1, 0.6 * b1, 0.9 * b1], "minimize_plus",
                 cfg, grid_solver, threads=1)
    energies = [r["energy"] for r in rows]
    assert all(r["error"] == "" for r in rows)
    assert energies[0] > energies[1] > energies[2]


def test_sweep_regime_flip_recorded(p0, grid_solver):
    from cknlab.params import derive_exponents, validate
    qs = [2.4, 2.7, 3.0, 3.3]
    regimes = [derive_exponents(validate(3, 0.25, 0.5, q, 0.1, 1.0)).regime.value
               for q in qs]
    assert regimes == ["subcritical", "subcritical", "supercritical", "supercritical"]


def test_sweep_empty_values(p0, grid_solver):
    rows = sweep(p0, "beta", [], "minimize_plus", SolverConfig(), grid_solver)
    assert rows == []


def test_custom_seed_profile(p0, constants_p0, grid_solver):
    from cknlab.grid import RadialFunction
    seed = RadialFunction(grid_solver, np.exp(-2.0 * (grid_solver.r - 0.3) ** 2))
    cfg = SolverConfig(branch="plus", seed_profile="custom", max_iters=200,
                       require_convergence=False)
    p_run = p0.replace(beta=0.8 * constants_p0.thresholds.beta1)
    rep = minimize_plus(p_run, cfg, grid_solver, constants=constants_p0, seed=seed)
    assert rep.energy < 0.0


def test_solution_report_serialization(ground_state_p0, tmp_path):
    _, rep = ground_state_p0
    path = tmp_path / "u.csv"
    rep.profile.to_csv(path)
    d = rep.as_dict(profile_path=path)
    assert d["converged"] is True
    assert d["profile_csv"] == str(path)
    assert {"lambda", "energy", "mass_sq", "pohozaev", "el_residual"} <= set(d)


def test_sweep_parallel_matches_serial(p0, grid_solver):
    cfg = SolverConfig(max_iters=40, require_convergence=False)
    values = [0.3, 0.6]
    serial = sweep(p0, "beta", values, "minimize_plus", cfg, grid_solver, threads=1)
    parallel = sweep(p0, "beta", values, "minimize_plus", cfg, grid_solver, threads=2)
    for r1, r2 in zip(serial, parallel):
        assert r1["energy"] == pytest.approx(r2["energy"], rel=1e-14)
        assert r1["error"] == r2["error"]


def test_subcritical_minus_level_and_gap_bound(p0, constants_p0, grid_solver,
                                               ground_state_p0):
    # the Minus level in the coercive range sits in (0, m + (d/N) S^(N/2d))
    p_run, rep_plus = ground_state_p0
    rep, level = minimize_minus(p_run, SolverConfig(branch="minus", seed_profile="bubble"),
                                grid_solver, constants=constants_p0,
                                m_plus_level=rep_plus.energy)
    assert rep.converged
    checks = {c.name: c for c in level.bound_checks}
    assert checks["level_positive"].holds
    assert checks["level_below_gap_bound"].holds
    assert rep_plus.energy < 0.0 < level.level_value


def test_window_warning_diagnostic(p0, constants_p0):
    # a too-short right window triggers the tail-certificate warning
    import math
    from cknlab.grid import make_grid
    tight = make_grid(math.log(1e-6), math.log(100.0), 1024, 3)
    p_run = p0.replace(beta=0.8 * constants_p0.thresholds.beta1)
    cfg = SolverConfig(branch="plus", max_iters=40, require_convergence=False)
    rep = minimize_plus(p_run, cfg, tight)
    assert rep.diagnostics["tail_certificate"] > 1e-10
    assert "window_warning" in rep.diagnostics
