"""Fiber-map analysis along the mass-preserving dilation orbit.

For fixed u with coefficients (A, B, C), the energy along the orbit is

    Phi(t) = e^(2t) A/2 - (beta/q) e^(q dq t) B - e^(2# t) C/2#,

and t is a critical point of Phi exactly when the dilated profile lies
on the Pohozaev manifold; the sign of Phi'' there separates the local
minimum branch (Plus) from the mountain-pass branch (Minus).  In the
subcritical coercive range (q dq < 2, coefficient below the envelope
threshold) Phi has exactly two critical points t1 < t2 interlaced with
its two zeros, t1 < s1 < t2 < s2, with Phi(t1) < 0 < Phi(t2); at and
above the mass-critical power it has a single strict maximum.

Critical points and zeros are located by a dense sign scan on
t in [-40, 20] followed by bisection; window exhaustion is an explicit
error, never silent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BranchAbsent,
    DegenerateCoefficients,
    NoPositiveInterval,
    RegimeMismatch,
    ScanWindowExhausted,
)
from .functionals import FiberCoefficients, dilate, fiber_coefficients, pohozaev
from .grid import RadialFunction, dirichlet_energy
from .params import ProblemParams, Regime, derive_exponents, envelope_peak_height

SCAN_T_MIN = -40.0
SCAN_T_MAX = 20.0
SCAN_STEP = 1e-2

#: |Phi''| below this times the term scale is reported as degenerate
DEGENERATE_RTOL = 1e-8

#: Pohozaev tolerance of the manifold projection, relative to A_grad
PROJECTION_RTOL = 1e-8


@dataclass(frozen=True)
class FiberPoint:
    t: float
    phi: float
    phi2: float
    branch: str  # "plus" | "minus" | "degenerate"


@dataclass
class FiberReport:
    coefficients: FiberCoefficients
    regime: Regime
    criticals: list
    zeros: list
    structure_ok: bool
    structure_label: str

    def as_dict(self):
        return {
            "A": self.coefficients.A_grad, "B": self.coefficients.B_q,
            "C": self.coefficients.C_crit,
            "criticals": [{"t": c.t, "phi": c.phi, "phi2": c.phi2, "branch": c.branch}
                          for c in self.criticals],
            "zeros": list(self.zeros),
            "regime": self.regime.value,
            "structure_ok": self.structure_ok,
            "structure_label": self.structure_label,
        }


class FiberMap:
    """Scalar fiber map over fixed coefficients (A, B, C)."""

    def __init__(self, coeffs: FiberCoefficients, p: ProblemParams):
        e = derive_exponents(p)
        self.A, self.B, self.C = coeffs.as_tuple()
        self.beta = p.beta
        self.q = p.q
        self.qd = p.q * e.delta_q
        self.ts = e.two_sharp
        self.bB = p.beta * self.B
        self.delta_q = e.delta_q

    def value(self, t):
        t = np.asarray(t, dtype=float)
        return (0.5 * np.exp(2 * t) * self.A
                - np.exp(self.qd * t) * self.bB / self.q
                - np.exp(self.ts * t) * self.C / self.ts)

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        return (np.exp(2 * t) * self.A
                - self.delta_q * np.exp(self.qd * t) * self.bB
                - np.exp(self.ts * t) * self.C)

    def deriv2(self, t):
        t = np.asarray(t, dtype=float)
        return (2 * np.exp(2 * t) * self.A
                - self.qd * self.delta_q * np.exp(self.qd * t) * self.bB
                - self.ts * np.exp(self.ts * t) * self.C)

    def term_scale(self, t):
        return (np.exp(2 * t) * self.A
                + self.delta_q * np.exp(self.qd * t) * self.bB
                + np.exp(self.ts * t) * self.C)

    def deriv_sign_at_minus_inf(self):
        """Sign of Phi' as t -> -infinity (slowest-decaying term wins)."""
        if self.bB > 0.0 and self.qd < 2.0:
            return -1.0
        if self.bB > 0.0 and self.qd == 2.0:
            return math.copysign(1.0, self.A - self.delta_q * self.bB)
        return 1.0


def _bisect(f, lo, hi, iters=200):
    flo = f(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if flo * fm <= 0.0:
            hi = mid
        else:
            lo, flo = mid, fm
        if hi - lo < 1e-14 * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


def _scan_roots(f, sign_minus_inf, sign_plus_inf, what):
    ts = np.arange(SCAN_T_MIN, SCAN_T_MAX + SCAN_STEP, SCAN_STEP)
    vals = f(ts)
    sgn = np.sign(vals)
    if sgn[0] != 0 and sign_minus_inf != 0 and sgn[0] != sign_minus_inf:
        raise ScanWindowExhausted(
            f"{what}: sign at t={SCAN_T_MIN} disagrees with the asymptotic sign; "
            "a root lies beyond the scan window")
    if sgn[-1] != 0 and sign_plus_inf != 0 and sgn[-1] != sign_plus_inf:
        raise ScanWindowExhausted(
            f"{what}: sign at t={SCAN_T_MAX} disagrees with the asymptotic sign")
    idx = np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]
    return [_bisect(f, ts[i], ts[i + 1]) for i in idx]


def analyze_fiber(u, p: ProblemParams, threshold_est: float | None = None,
                  margin: float = 0.05) -> FiberReport:
    """Critical points, zeros and manifold classification of the fiber map.

    `u` may be a profile or precomputed FiberCoefficients.  When
    threshold_est (estimated beta1 for subcritical, beta* for critical
    and above) is supplied, structure_ok is gated with a `margin` safety
    band; runs inside the band are labeled "inconclusive", runs above it
    "ungated".
    """
    coeffs = u if isinstance(u, FiberCoefficients) else fiber_coefficients(u, p)
    if coeffs.A_grad <= 0.0 or coeffs.C_crit <= 0.0:
        raise DegenerateCoefficients(
            f"A={coeffs.A_grad!r}, C={coeffs.C_crit!r}: fiber map has no critical structure")
    e = derive_exponents(p)
    fm = FiberMap(coeffs, p)

    crit_ts = _scan_roots(fm.deriv, fm.deriv_sign_at_minus_inf(), -1.0, "Phi'")
    criticals = []
    for t in crit_ts:
        phi2 = float(fm.deriv2(t))
        scale = float(fm.term_scale(t))
        if abs(phi2) < DEGENERATE_RTOL * scale:
            branch = "degenerate"
        else:
            branch = "plus" if phi2 > 0.0 else "minus"
        criticals.append(FiberPoint(t=float(t), phi=float(fm.value(t)),
                                    phi2=phi2, branch=branch))

    # Phi approaches 0 at -inf with the same sign as Phi' (the dominant
    # exponential is shared), and -inf at +inf
    zeros = _scan_roots(fm.value, fm.deriv_sign_at_minus_inf(), -1.0, "Phi")

    ok, label = _structure_check(criticals, zeros, fm, e.regime, p.beta,
                                 threshold_est, margin)
    return FiberReport(coefficients=coeffs, regime=e.regime, criticals=criticals,
                       zeros=zeros, structure_ok=ok, structure_label=label)


def _structure_check(criticals, zeros, fm, regime, beta, threshold_est, margin):
    if regime is Regime.SUBCRITICAL:
        pattern = (len(criticals) == 2 and len(zeros) == 2
                   and criticals[0].branch == "plus" and criticals[1].branch == "minus"
                   and criticals[0].t < zeros[0] < criticals[1].t < zeros[1]
                   and criticals[0].phi < 0.0 < criticals[1].phi)
    else:
        pattern = (len(criticals) == 1 and criticals[0].branch == "minus"
                   and criticals[0].phi > 0.0)
        if pattern:
            # sampled monotone decrease past the maximum
            ts = criticals[0].t + np.linspace(0.1, 5.0, 25)
            pattern = bool(np.all(np.diff(fm.value(ts)) < 0.0))
    if threshold_est is None:
        return pattern, "ungated"
    if beta < (1.0 - margin) * threshold_est:
        return pattern, ("ok" if pattern else "violated")
    if beta <= (1.0 + margin) * threshold_est:
        return pattern, "inconclusive"
    return pattern, "ungated"


class _DilationOracle:
    """Cached interpolant so repeated dilations of one profile are cheap."""

    def __init__(self, u: RadialFunction, p: ProblemParams):
        from scipy.interpolate import CubicSpline
        self.u = u
        self.p = p
        self.g = u.grid
        self._cs = CubicSpline(self.g.s, u.values, extrapolate=False)
        self._amp = (p.N - 2.0 * p.a) / 2.0

    def profile(self, t: float) -> RadialFunction:
        g = self.g
        span = g.s_max - g.s_min
        if abs(t) >= span / 2.0:
            from .errors import ShiftTooLarge
            raise ShiftTooLarge(f"|t|={abs(t)!r} >= half window {span / 2.0!r}")
        k = t / g.ds
        kr = round(k)
        if abs(k - kr) < 1e-9:
            return dilate(self.u, t, self.p)
        out = self._cs(g.s + t)
        right = np.isnan(out) & (g.s + t > g.s_max)
        out[right] = 0.0
        out[np.isnan(out)] = self.u.values[0]
        return RadialFunction(g, math.exp(self._amp * t) * out)

    def pohozaev(self, t: float) -> float:
        return pohozaev(self.profile(t), self.p)


def project_to_manifold(u: RadialFunction, p: ProblemParams, branch: str,
                        report: FiberReport | None = None) -> RadialFunction:
    """Dilate u onto the requested Pohozaev-manifold branch.

    The scalar fiber analysis provides the starting point; the dilation
    is then refined by bisection on the actual quadrature value of the
    Pohozaev functional of the resampled profile, so the result satisfies
    |P(result)| <= PROJECTION_RTOL * A_grad(result).
    """
    if branch not in ("plus", "minus"):
        raise ValueError(f"branch must be 'plus' or 'minus', got {branch!r}")
    if report is None:
        report = analyze_fiber(u, p, threshold_est=None)
    matching = [c for c in report.criticals if c.branch == branch]
    if not matching:
        raise BranchAbsent(f"no {branch}-branch critical point "
                           f"(regime {report.regime.value}, beta={p.beta!r})")
    t0 = matching[0].t if branch == "plus" else matching[-1].t

    oracle = _DilationOracle(u, p)
    g = oracle.pohozaev
    lo, hi = t0 - 0.02, t0 + 0.02
    glo, ghi = g(lo), g(hi)
    widen = 0
    while glo * ghi > 0.0 and widen < 40:
        lo -= 0.05
        hi += 0.05
        glo, ghi = g(lo), g(hi)
        widen += 1
    if glo * ghi > 0.0:
        raise BranchAbsent(f"could not bracket the {branch} projection near t={t0!r}")
    t_star = _bisect(g, lo, hi)
    out = oracle.profile(t_star)
    if abs(pohozaev(out, p)) > PROJECTION_RTOL * dirichlet_energy(out, p.a):
        raise BranchAbsent(f"projection postcondition failed at t={t_star!r}")
    return out


@dataclass
class EnvelopeReport:
    t_tilde: float
    h_max: float
    kappa_tilde: float
    kappa_hat: float
    positive_interval_nonempty: bool

    def as_dict(self):
        return {"t_tilde": self.t_tilde, "h_max": self.h_max,
                "kappa_tilde": self.kappa_tilde, "kappa_hat": self.kappa_hat,
                "positive_interval_nonempty": self.positive_interval_nonempty}


def envelope_value(t, p: ProblemParams, S_ab: float, C_ab: float):
    """f(t) = t^2/2 - (beta/q) C^q rho^((1-dq)q) t^(q dq) - t^2# / (2# S^(2#/2))."""
    e = derive_exponents(p)
    qd = p.q * e.delta_q
    t = np.asarray(t, dtype=float)
    return (0.5 * t ** 2
            - p.beta / p.q * C_ab ** p.q * p.rho ** ((1.0 - e.delta_q) * p.q) * t ** qd
            - t ** e.two_sharp / (e.two_sharp * S_ab ** (e.two_sharp / 2.0)))


def envelope(p: ProblemParams, S_ab: float, C_ab: float) -> EnvelopeReport:
    """Two-sided zeros of the coercivity envelope in the subcritical range.

    h(t) = t^(2-q dq)/2 - t^(2#-q dq)/(2# S^(2#/2)) peaks at the
    closed-form t_tilde; f is positive exactly between the two solutions
    kappa_tilde < kappa_hat of h(t) = (beta/q) C^q rho^((1-dq)q), which
    exist iff that level is below the peak (iff beta < beta1).
    """
    e = derive_exponents(p)
    qd = p.q * e.delta_q
    if qd >= 2.0:
        raise RegimeMismatch(f"envelope needs the subcritical range (q*delta_q={qd!r} >= 2)")
    ts = e.two_sharp
    Spow = S_ab ** (ts / 2.0)
    t_tilde = (ts * Spow * (2.0 - qd) / (2.0 * (ts - qd))) ** (1.0 / (ts - 2.0))
    rhs = p.beta / p.q * C_ab ** p.q * p.rho ** ((1.0 - e.delta_q) * p.q)
    h_max = envelope_peak_height(p, S_ab)

    def h(t):
        return 0.5 * t ** (2.0 - qd) - t ** (ts - qd) / (ts * Spow)

    if not h_max > rhs:
        raise NoPositiveInterval(
            f"envelope peak {h_max!r} <= threshold level {rhs!r} (beta too large)")

    kappa_tilde = _bisect(lambda t: h(t) - rhs, 0.0, t_tilde)
    hi = 2.0 * t_tilde
    while h(hi) - rhs > 0.0:
        hi *= 2.0
    kappa_hat = _bisect(lambda t: rhs - h(t), t_tilde, hi)
    return EnvelopeReport(t_tilde=float(t_tilde), h_max=float(h_max),
                          kappa_tilde=float(kappa_tilde), kappa_hat=float(kappa_hat),
                          positive_interval_nonempty=True)


def check_lower_bound(u: RadialFunction, p: ProblemParams,
                      S_ab: float, C_ab: float) -> bool:
    """E(u) >= f(|||x|^-a grad u||_2) for mass-normalized u."""
    from .functionals import energy
    t = math.sqrt(dirichlet_energy(u, p.a))
    lhs = energy(u, p)
    rhs = float(envelope_value(t, p, S_ab, C_ab))
    return lhs >= rhs - 1e-12 * (abs(lhs) + abs(rhs))
