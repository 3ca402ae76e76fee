"""Variational objects on discretized profiles.

For u on the mass sphere {omega*int r^(N-1-2a) u^2 dr = rho^2} the
constrained energy and its Pohozaev functional are

    E(u) = A/2 - (beta/q) B - C/2#,      P(u) = A - beta*delta_q*B - C,

with A = |||x|^-a grad u||_2^2, B = |||x|^-b u||_q^q, C = |||x|^-b u||_2#^2#.
The mass-preserving dilation (t*u)(x) = e^((N-2a)t/2) u(e^t x) scales the
three coefficients by e^(2t), e^(q delta_q t), e^(2# t); the energy along
the dilation orbit is the fiber map analyzed in the fiber module.

The strong-form Euler-Lagrange residual is measured with the discrete
operator that is the exact adjoint of the centered differentiation used
by dirichlet_energy, so a discrete constrained critical point has
residual at roundoff level rather than at truncation level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateProfile, ZeroProfile
from .grid import RadialFunction, RadialGrid, dirichlet_energy, resample, weighted_norm_pow
from .params import ProblemParams, derive_exponents

#: nodes dropped at each window end when measuring strong-form residuals
#: (one-sided stencils pollute the boundary rows)
EL_EDGE_SKIP = 3


@dataclass(frozen=True)
class FiberCoefficients:
    A_grad: float
    B_q: float
    C_crit: float

    def as_tuple(self):
        return (self.A_grad, self.B_q, self.C_crit)


@dataclass
class SolutionReport:
    profile: RadialFunction
    lam: float
    energy: float
    mass_sq: float
    pohozaev: float
    el_residual: float
    iterations: int
    converged: bool
    branch: str = ""
    grad_norm: float = 0.0
    lam_pohozaev: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self, profile_path=None):
        out = {
            "lambda": self.lam,
            "lambda_pohozaev": self.lam_pohozaev,
            "energy": self.energy,
            "mass_sq": self.mass_sq,
            "pohozaev": self.pohozaev,
            "el_residual": self.el_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "branch": self.branch,
            "grad_norm": self.grad_norm,
            "diagnostics": self.diagnostics,
        }
        if profile_path is not None:
            out["profile_csv"] = str(profile_path)
        return out


def odd_power(vals: np.ndarray, p: float) -> np.ndarray:
    """sign(u) |u|^p, the odd extension used for non-integer powers."""
    return np.sign(vals) * np.abs(vals) ** p


def mass_sq(u: RadialFunction, a: float) -> float:
    return weighted_norm_pow(u, 2.0, a)


def fiber_coefficients(u: RadialFunction, p: ProblemParams) -> FiberCoefficients:
    e = derive_exponents(p)
    return FiberCoefficients(
        A_grad=dirichlet_energy(u, p.a),
        B_q=weighted_norm_pow(u, p.q, p.b),
        C_crit=weighted_norm_pow(u, e.two_sharp, p.b),
    )


def energy_from_coefficients(c: FiberCoefficients, p: ProblemParams) -> float:
    e = derive_exponents(p)
    return 0.5 * c.A_grad - p.beta / p.q * c.B_q - c.C_crit / e.two_sharp


def pohozaev_from_coefficients(c: FiberCoefficients, p: ProblemParams) -> float:
    e = derive_exponents(p)
    return c.A_grad - p.beta * e.delta_q * c.B_q - c.C_crit


def energy(u: RadialFunction, p: ProblemParams) -> float:
    return energy_from_coefficients(fiber_coefficients(u, p), p)


def pohozaev(u: RadialFunction, p: ProblemParams) -> float:
    return pohozaev_from_coefficients(fiber_coefficients(u, p), p)


def dilate(u: RadialFunction, t: float, p: ProblemParams) -> RadialFunction:
    """Mass-preserving dilation r -> e^((N-2a)t/2) u(e^t r)."""
    v = resample(u, t)
    return v.scaled(np.exp((p.N - 2.0 * p.a) / 2.0 * t))


def centered_stiffness(g: RadialGrid, a: float) -> sp.csr_matrix:
    """K with u.K.u = dirichlet_energy(u, a) exactly (centered scheme)."""
    n, ds = g.n, g.ds
    lo = -np.ones(n - 1) / (2.0 * ds)
    hi = np.ones(n - 1) / (2.0 * ds)
    D = sp.diags([lo, np.zeros(n), hi], [-1, 0, 1], format="lil")
    D[0, 0], D[0, 1], D[0, 2] = -3 / (2 * ds), 4 / (2 * ds), -1 / (2 * ds)
    D[-1, -1], D[-1, -2], D[-1, -3] = 3 / (2 * ds), -4 / (2 * ds), 1 / (2 * ds)
    D = D.tocsr()
    w = g.trap_w * g.r ** (g.N - 2.0 - 2.0 * a)
    return (g.omega * g.ds * (D.T @ sp.diags(w) @ D)).tocsr()


def midpoint_stiffness(g: RadialGrid, a: float) -> sp.csr_matrix:
    """Conservative tridiagonal form of the same bilinear form.

    Weight r^(N-2-2a) evaluated at cell midpoints in s (exact for the
    exponential weight); positive semi-definite with only constants in
    the kernel, so descent steps cannot hide energy in grid-scale
    oscillation.
    """
    smid = 0.5 * (g.s[:-1] + g.s[1:])
    e = g.omega * np.exp(smid * (g.N - 2.0 - 2.0 * a)) / g.ds
    main = np.concatenate([e, [0.0]]) + np.concatenate([[0.0], e])
    return sp.diags([main, -e, -e], [0, -1, 1]).tocsr()


def mass_matrix_diag(g: RadialGrid, a: float) -> np.ndarray:
    """Diagonal of the weighted-L2 Gram matrix (trapezoid lumping)."""
    return g.omega * g.ds * g.trap_w * g.r ** (g.N - 2.0 * a)


def subcritical_force(u: RadialFunction, p: ProblemParams) -> np.ndarray:
    """Dual vector of d/du [(beta/q) B_q]."""
    g = u.grid
    return (g.omega * g.ds * g.trap_w * g.r ** (g.N - p.b * p.q)
            * p.beta * odd_power(u.values, p.q - 1.0))


def critical_force(u: RadialFunction, p: ProblemParams) -> np.ndarray:
    """Dual vector of d/du [C_crit / 2#]."""
    g = u.grid
    ts = derive_exponents(p).two_sharp
    return (g.omega * g.ds * g.trap_w * g.r ** (g.N - p.b * ts)
            * odd_power(u.values, ts - 1.0))


def _strong_parts(u: RadialFunction, lam: float, p: ProblemParams, K=None):
    g = u.grid
    if K is None:
        K = centered_stiffness(g, p.a)
    Mdiag = mass_matrix_diag(g, p.a)
    lhs = K @ u.values
    rhs = subcritical_force(u, p) + critical_force(u, p) + lam * Mdiag * u.values
    # dual vectors carry a factor omega*ds*trap_w*r vs the strong form;
    # the normalized ratio below is insensitive to it
    w = 1.0 / (g.trap_w * g.r)
    sl = slice(EL_EDGE_SKIP, -EL_EDGE_SKIP)
    return lhs, rhs, w, sl


def el_residual(u: RadialFunction, lam: float, p: ProblemParams, K=None) -> float:
    """Normalized strong-form residual ||L u - rhs|| / ||rhs||.

    Interior nodes only (EL_EDGE_SKIP at each end); by convention the
    zero profile has residual 0.
    """
    if not np.any(u.values):
        return 0.0
    lhs, rhs, w, sl = _strong_parts(u, lam, p, K)
    den = float(np.sum((rhs ** 2 * w)[sl]))
    if den < 1e-280:
        raise DegenerateProfile("right-hand side underflows")
    num = float(np.sum(((lhs - rhs) ** 2 * w)[sl]))
    return np.sqrt(num / den)


def lambda_identity(u: RadialFunction, p: ProblemParams):
    """(lambda_rayleigh, lambda_pohozaev).

    The Rayleigh value pairs the weak form with u; the other evaluates
    beta (delta_q - 1) B_q / rho^2, which equals it exactly when the
    Pohozaev functional vanishes.
    """
    if not np.any(u.values):
        raise ZeroProfile("lambda undefined for the zero profile")
    e = derive_exponents(p)
    c = fiber_coefficients(u, p)
    m = mass_sq(u, p.a)
    if m <= 0.0:
        raise ZeroProfile("vanishing mass")
    lam_ray = (c.A_grad - p.beta * c.B_q - c.C_crit) / m
    lam_poh = p.beta * (e.delta_q - 1.0) * c.B_q / p.rho ** 2
    return lam_ray, lam_poh


def critical_source_fit(u: RadialFunction, p: ProblemParams, K=None):
    """Least-squares coefficient c in L u ~ c * |x|^(-2#b) u^(2#-1).

    Returns (c, normalized post-fit residual); the explicit extremal
    family satisfies the critical equation with c = 1.
    """
    g = u.grid
    if K is None:
        K = centered_stiffness(g, p.a)
    ts = derive_exponents(p).two_sharp
    lhs = K @ u.values
    f = (g.omega * g.ds * g.trap_w * g.r ** (g.N - p.b * ts)
         * odd_power(u.values, ts - 1.0))
    w = 1.0 / (g.trap_w * g.r)
    sl = slice(EL_EDGE_SKIP, -EL_EDGE_SKIP)
    num = float(np.sum((lhs * f * w)[sl]))
    den = float(np.sum((f * f * w)[sl]))
    if den < 1e-280:
        raise DegenerateProfile("critical source term vanishes")
    c = num / den
    res = float(np.sqrt(np.sum((((lhs - c * f) ** 2) * w)[sl])
                        / np.sum(((c * f) ** 2 * w)[sl])))
    return c, res
