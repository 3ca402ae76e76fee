"""Shared fixtures.

The expensive objects (wide grid, best constants at the canonical
parameter point, the ground-state solve) are session-scoped: the
acceptance criteria reuse them instead of recomputing.
"""

import math
import time

import numpy as np
import pytest

from cknlab import (
    SolverConfig,
    compute_constants,
    make_grid,
    minimize_plus,
    wide_grid,
)
from cknlab.params import validate

SESSION_T0 = time.monotonic()

ACCEPTANCE_LINES = []


def record_acceptance(line):
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def p0():
    """Canonical parameter point: N=3, a=0.25, b=0.5, q=2.5, rho=1."""
    return validate(3, 0.25, 0.5, 2.5, 0.1, 1.0)


@pytest.fixture(scope="session")
def grid_default():
    return make_grid(N=3)


@pytest.fixture(scope="session")
def grid_wide():
    return wide_grid(3)


@pytest.fixture(scope="session")
def grid_solver():
    """Solver runs use a window resolving both bubble cores and tails."""
    return make_grid(math.log(1e-8), math.log(1e4), 3072, 3)


@pytest.fixture(scope="session")
def constants_p0(p0, grid_wide):
    return compute_constants(p0, grid_wide, seed=0)


@pytest.fixture(scope="session")
def ground_state_p0(p0, constants_p0, grid_solver):
    """Plus-branch ground state at the canonical coefficient 0.8*beta1."""
    p_run = p0.replace(beta=0.8 * constants_p0.thresholds.beta1)
    report = minimize_plus(p_run, SolverConfig(branch="plus"), grid_solver,
                           constants=constants_p0)
    return p_run, report


@pytest.fixture(scope="session")
def mass_critical_run(p0, grid_wide, grid_solver):
    from cknlab import minimize_minus
    from cknlab.params import mass_critical_q
    qc = mass_critical_q(3, 0.25, 0.5)
    p_mc = p0.replace(q=qc)
    consts = compute_constants(p_mc, grid_wide, seed=0)
    p_run = p_mc.replace(beta=0.5 * consts.thresholds.beta_star_crit)
    report, level = minimize_minus(p_run, SolverConfig(branch="minus", seed_profile="bubble"),
                                   grid_solver, constants=consts)
    return p_run, consts, report, level


@pytest.fixture(scope="session")
def supercritical_run(p0, grid_wide, grid_solver):
    from cknlab import minimize_minus
    p_sc = p0.replace(q=3.0, beta=1.0)
    consts = compute_constants(p_sc, grid_wide, seed=0)
    report, level = minimize_minus(p_sc, SolverConfig(branch="minus", seed_profile="bubble"),
                                   grid_solver, constants=consts)
    return p_sc, consts, report, level


@pytest.fixture(scope="session")
def beta_zero_run(p0, constants_p0, grid_solver):
    from cknlab import minimize_minus
    p_run = p0.replace(beta=0.0)
    cfg = SolverConfig(branch="minus", seed_profile="gaussian", max_iters=300,
                       tol_EL=1e-5, require_convergence=False)
    report, level = minimize_minus(p_run, cfg, grid_solver, constants=constants_p0)
    return p_run, report, level


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
