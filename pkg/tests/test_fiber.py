import math

import numpy as np
import pytest

from cknlab.errors import BranchAbsent, DegenerateCoefficients, NoPositiveInterval
from cknlab.fiber import (
    FiberMap,
    analyze_fiber,
    check_lower_bound,
    envelope,
    envelope_value,
    project_to_manifold,
)
from cknlab.functionals import FiberCoefficients, dilate, fiber_coefficients, mass_sq, pohozaev
from cknlab.grid import RadialFunction, dirichlet_energy, sample
from cknlab.params import derive_exponents, mass_critical_q, validate


def normalized(u, p):
    return u.scaled(p.rho / math.sqrt(mass_sq(u, p.a)))


def test_single_critical_point_beta_zero(p0):
    # A=B=C=1, beta=0, 2#=4: the single critical point is t=0 with value 1/4
    coeffs = FiberCoefficients(1.0, 1.0, 1.0)
    rep = analyze_fiber(coeffs, p0.replace(beta=0.0))
    assert len(rep.criticals) == 1
    c = rep.criticals[0]
    assert c.t == pytest.approx(0.0, abs=1e-12)
    assert c.phi == pytest.approx(0.25, abs=1e-12)
    assert c.branch == "minus"


def test_two_critical_points_hand_brackets(p0):
    # A=B=C=1, beta=0.1: sign scan puts the minimum in (-5,-3), max in (-1,0)
    coeffs = FiberCoefficients(1.0, 1.0, 1.0)
    rep = analyze_fiber(coeffs, p0.replace(beta=0.1))
    assert len(rep.criticals) == 2
    t1, t2 = rep.criticals
    assert -5.0 < t1.t < -3.0 and t1.branch == "plus"
    assert -1.0 < t2.t < 0.0 and t2.branch == "minus"
    # reported criticals satisfy the first-order condition sharply
    fm = FiberMap(coeffs, p0.replace(beta=0.1))
    for c in rep.criticals:
        assert abs(fm.deriv(c.t)) <= 1e-10 * fm.term_scale(c.t)


def test_subcritical_interlacing_structure(p0, constants_p0):
    beta = 0.5 * constants_p0.thresholds.beta1
    p = p0.replace(beta=beta)
    g = sample(_grid(), lambda r: np.exp(-r ** 2))
    u = normalized(g, p)
    rep = analyze_fiber(u, p, threshold_est=constants_p0.thresholds.beta1)
    assert rep.structure_label == "ok"
    assert rep.structure_ok
    t1, t2 = [c.t for c in rep.criticals]
    s1, s2 = rep.zeros
    assert t1 < s1 < t2 < s2
    assert rep.criticals[0].phi < 0.0 < rep.criticals[1].phi


def _grid():
    from cknlab.grid import make_grid
    return make_grid(N=3)


def test_mass_critical_single_maximum(p0, grid_wide):
    qc = mass_critical_q(3, 0.25, 0.5)
    p = p0.replace(q=qc, beta=0.5)
    u = normalized(sample(_grid(), lambda r: np.exp(-r ** 2)), p)
    rep = analyze_fiber(u, p)
    assert len(rep.criticals) == 1
    assert rep.criticals[0].branch == "minus"
    assert rep.criticals[0].phi > 0.0
    assert rep.structure_ok  # sampled monotone decrease past the max


def test_mass_critical_condition_for_maximum(p0):
    # with q=q_c the fiber map is (A/2 - beta B/q_c) e^{2t} - C e^{2#t}/2#:
    # a positive maximum exists iff the bracket is positive
    qc = mass_critical_q(3, 0.25, 0.5)
    p = p0.replace(q=qc, beta=1.0)
    good = FiberCoefficients(2.0, 1.0, 1.0)   # A/2 - B/q_c > 0
    rep = analyze_fiber(good, p)
    assert len(rep.criticals) == 1 and rep.criticals[0].phi > 0
    bad = FiberCoefficients(0.5, 1.0, 1.0)    # A/2 - beta B/q_c < 0
    rep2 = analyze_fiber(bad, p)
    assert len(rep2.criticals) == 0
    assert not rep2.structure_ok


def test_degenerate_coefficients(p0):
    with pytest.raises(DegenerateCoefficients):
        analyze_fiber(FiberCoefficients(1.0, 1.0, 0.0), p0)


def test_projection_fixed_point(p0, constants_p0):
    beta = 0.5 * constants_p0.thresholds.beta1
    p = p0.replace(beta=beta)
    u = normalized(sample(_grid(), lambda r: np.exp(-r ** 2)), p)
    v = project_to_manifold(u, p, "minus")
    assert abs(pohozaev(v, p)) <= 1e-8 * dirichlet_energy(v, p.a)
    w = project_to_manifold(v, p, "minus")
    # already on the manifold: the projection is a near-identity
    assert abs(np.max(np.abs(w.values - v.values))) <= 1e-6 * np.max(v.values)


def test_projection_both_branches_subcritical(p0, constants_p0):
    beta = 0.5 * constants_p0.thresholds.beta1
    p = p0.replace(beta=beta)
    u = normalized(sample(_grid(), lambda r: np.exp(-0.5 * r ** 2)), p)
    for branch in ("plus", "minus"):
        v = project_to_manifold(u, p, branch)
        assert abs(pohozaev(v, p)) <= 1e-8 * dirichlet_energy(v, p.a)
        rep = analyze_fiber(v, p)
        # t=0 must now be (near) the requested critical point
        matching = [c for c in rep.criticals if c.branch == branch]
        assert matching and min(abs(c.t) for c in matching) < 1e-6


def test_plus_branch_absent_supercritical(p0):
    p = p0.replace(q=3.0, beta=1.0)
    u = normalized(sample(_grid(), lambda r: np.exp(-r ** 2)), p)
    with pytest.raises(BranchAbsent):
        project_to_manifold(u, p, "plus")
    v = project_to_manifold(u, p, "minus")
    assert abs(pohozaev(v, p)) <= 1e-8 * dirichlet_energy(v, p.a)


def test_fiber_criticals_match_pohozaev_both_directions(p0, constants_p0):
    # t critical of the fiber map <-> dilated profile is on the manifold
    beta = 0.5 * constants_p0.thresholds.beta1
    p = p0.replace(beta=beta)
    u = normalized(sample(_grid(), lambda r: np.exp(-r ** 2)), p)
    rep = analyze_fiber(u, p)
    c = fiber_coefficients(u, p)
    for point in rep.criticals:
        assert abs(pohozaev(dilate(u, point.t, p), p)) < 1e-6 * c.A_grad
    for t in (-2.0, -0.5, 0.5):
        if min(abs(t - pt.t) for pt in rep.criticals) > 0.3:
            assert abs(pohozaev(dilate(u, t, p), p)) > 1e-6 * c.A_grad


def test_envelope_closed_form_and_zeros(p0, constants_p0):
    S, C = constants_p0.S_ab, constants_p0.C_ab
    th = constants_p0.thresholds
    p = p0.replace(beta=0.5 * th.beta1)
    env = envelope(p, S, C)
    e = derive_exponents(p)
    qd = p.q * e.delta_q
    t_expected = (e.two_sharp * S ** (e.two_sharp / 2) * (2 - qd)
                  / (2 * (e.two_sharp - qd))) ** (1.0 / (e.two_sharp - 2))
    assert env.t_tilde == pytest.approx(t_expected, rel=1e-13)
    assert env.kappa_tilde < env.t_tilde < env.kappa_hat
    for kappa in (env.kappa_tilde, env.kappa_hat):
        assert abs(envelope_value(kappa, p, S, C)) < 1e-10


def test_envelope_boundary_consistency(p0, constants_p0):
    # positive interval exists exactly below beta1
    S, C = constants_p0.S_ab, constants_p0.C_ab
    b1 = constants_p0.thresholds.beta1
    env = envelope(p0.replace(beta=0.999 * b1), S, C)
    assert env.positive_interval_nonempty
    with pytest.raises(NoPositiveInterval):
        envelope(p0.replace(beta=1.001 * b1), S, C)


def test_envelope_kappa_shrinks_with_beta(p0, constants_p0):
    S, C = constants_p0.S_ab, constants_p0.C_ab
    k1 = envelope(p0.replace(beta=1e-3), S, C).kappa_tilde
    k2 = envelope(p0.replace(beta=1e-6), S, C).kappa_tilde
    assert 0 < k2 < k1


def test_lower_bound_random_profiles(p0, constants_p0, rng):
    from tests.test_functionals import profile_family
    S, C = constants_p0.S_ab, constants_p0.C_ab
    p = p0.replace(beta=0.5 * constants_p0.thresholds.beta1)
    g = _grid()
    count = 0
    for u in profile_family(g):
        un = normalized(u, p)
        assert check_lower_bound(un, p, S, C)
        count += 1
    # plus randomized mixtures of the family, still mass-normalized
    fam = profile_family(g)
    for _ in range(100 - count):
        w = rng.uniform(0.0, 1.0, size=3)
        i, j, k = rng.integers(0, len(fam), size=3)
        mix = RadialFunction(g, w[0] * fam[i].values + w[1] * fam[j].values
                             + w[2] * fam[k].values)
        assert check_lower_bound(normalized(mix, p), p, S, C)


def test_lower_bound_tight_for_bubble_at_beta_zero(p0, constants_p0, grid_wide):
    # with the coefficient off, the gap in the critical step vanishes for the
    # extremal profile up to quadrature error
    from cknlab.extremals import BubbleSpec, bubble
    from cknlab.functionals import energy
    e = derive_exponents(p0)
    p = p0.replace(beta=0.0)
    u = bubble(BubbleSpec(1.0, 1.0, e), grid_wide)
    un = normalized(u, p)
    lhs = energy(un, p)
    rhs = float(envelope_value(math.sqrt(dirichlet_energy(un, p.a)), p,
                               constants_p0.S_ab, constants_p0.C_ab))
    assert lhs >= rhs
    assert abs(lhs - rhs) <= 1e-3 * abs(lhs)


def test_envelope_dominates_fiber_map(p0, constants_p0):
    # Phi(t) >= f(e^t ||grad u||) for mass-normalized u, sampled in t
    S, C = constants_p0.S_ab, constants_p0.C_ab
    p = p0.replace(beta=0.5 * constants_p0.thresholds.beta1)
    g = _grid()
    u = normalized(sample(g, lambda r: np.exp(-r ** 2)), p)
    fm = FiberMap(fiber_coefficients(u, p), p)
    gn = math.sqrt(dirichlet_energy(u, p.a))
    for t in np.linspace(-3, 1.5, 40):
        assert fm.value(t) >= envelope_value(math.exp(t) * gn, p, S, C) - 1e-12


def test_m0_emptiness_proxy(p0, constants_p0):
    # no near-degenerate critical points at beta 10% below the threshold
    p = p0.replace(beta=0.9 * constants_p0.thresholds.beta1)
    g = _grid()
    from tests.test_functionals import profile_family
    for u in profile_family(g)[:8]:
        rep = analyze_fiber(normalized(u, p), p)
        assert all(c.branch != "degenerate" for c in rep.criticals)


def test_scan_window_exhausted(p0):
    from cknlab.errors import ScanWindowExhausted
    # the single critical point of this coefficient triple sits near
    # t = ln(A/C)/(2#-2) ~ 34.5, beyond the scan window
    with pytest.raises(ScanWindowExhausted):
        analyze_fiber(FiberCoefficients(1.0, 0.0, 1e-30), p0.replace(beta=0.0))


def test_beta_zero_fiber_maximum_closed_form(p0):
    # with the coefficient off, the fiber maximum has the closed form
    # (d/N) (A / C^{2/2#})^{N/2d}
    from cknlab.params import derive_exponents
    e = derive_exponents(p0)
    A, C = 2.3, 0.7
    rep = analyze_fiber(FiberCoefficients(A, 1.0, C), p0.replace(beta=0.0))
    assert len(rep.criticals) == 1
    expected = (e.d / 3.0) * (A / C ** (2.0 / e.two_sharp)) ** (3.0 / (2.0 * e.d))
    assert rep.criticals[0].phi == pytest.approx(expected, rel=1e-10)
    t_expected = math.log(A / C) / (e.two_sharp - 2.0)
    assert rep.criticals[0].t == pytest.approx(t_expected, abs=1e-10)
