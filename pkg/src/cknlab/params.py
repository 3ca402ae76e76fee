"""Problem parameters, derived exponents and threshold coefficients.

The weighted problem is parameterized by (N, a, b, q, beta, rho) with

    N >= 3,   0 < a < (N-2)/2,   a < b < a+1,   2 < q < 2#,

where d = 1+a-b and 2# = 2N/(N-2d) is the critical power of the weighted
embedding.  Everything here is closed-form arithmetic on those numbers:

    delta_q = ((N-2a+2b) q - 2N) / (2q)        interpolation exponent
    q_c     = (4+2N) / (N-2a+2b)               mass-critical power
    alpha   = 2d(N-2-2a)/(N-2d), A = ((N-2)/2 - a)^2   bubble shape constants

The regime splits at q_c: q*delta_q < 2 (subcritical, constrained energy
coercive), = 2 (mass-critical), > 2 (supercritical).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import (
    DimensionTooSmall,
    NegativeCoefficient,
    NonPositiveMass,
    OffsetOutOfRange,
    PowerOutOfRange,
    RegimeMismatch,
    WeightOutOfRange,
)

#: relative tolerance deciding |q - q_c| ~ 0 (floating-point equality is
#: meaningless; callers wanting the exact mass-critical branch should build
#: q from q_c programmatically)
REGIME_RTOL = 1e-12


class Regime(Enum):
    SUBCRITICAL = "subcritical"
    MASS_CRITICAL = "mass_critical"
    SUPERCRITICAL = "supercritical"


@dataclass(frozen=True)
class ProblemParams:
    N: int
    a: float
    b: float
    q: float
    beta: float
    rho: float

    def as_dict(self):
        return {"N": self.N, "a": self.a, "b": self.b, "q": self.q,
                "beta": self.beta, "rho": self.rho}

    def replace(self, **kw) -> "ProblemParams":
        d = self.as_dict()
        d.update(kw)
        return validate(**d)


@dataclass(frozen=True)
class Exponents:
    d: float
    two_sharp: float
    delta_q: float
    q_c: float
    alpha_bubble: float
    A_bubble: float
    regime: Regime

    def as_dict(self):
        return {"d": self.d, "two_sharp": self.two_sharp, "delta_q": self.delta_q,
                "q_c": self.q_c, "alpha_bubble": self.alpha_bubble,
                "A_bubble": self.A_bubble, "regime": self.regime.value}


@dataclass(frozen=True)
class Thresholds:
    """Threshold coefficients built from the best constants S(a,b), C_{a,b}.

    beta1/beta2/beta_star_sub exist only in the subcritical regime (their
    closed forms involve (2 - q*delta_q)-powers and are meaningless past
    q_c); they are None otherwise.  beta_star_crit follows the three-case
    rule for q >= q_c, with None meaning "unbounded" -- a genuine absence
    of constraint, never a sentinel float.
    """

    beta1: float | None
    beta2: float | None
    beta_star_sub: float | None
    beta_star_crit: float | None
    beta_star_crit_unbounded: bool
    S_ab: float
    C_ab: float
    n3_extra_condition_applies: bool
    n3_extra_condition_met: bool

    def as_dict(self):
        return {
            "beta1": self.beta1, "beta2": self.beta2,
            "beta_star_sub": self.beta_star_sub,
            "beta_star_crit": ("unbounded" if self.beta_star_crit_unbounded
                               else self.beta_star_crit),
            "S_ab": self.S_ab, "C_ab": self.C_ab,
            "n3_extra_condition_applies": self.n3_extra_condition_applies,
            "n3_extra_condition_met": self.n3_extra_condition_met,
        }


def two_sharp_of(N: int, a: float, b: float) -> float:
    d = 1.0 + a - b
    return 2.0 * N / (N - 2.0 * d)


def delta_of(N: int, a: float, b: float, q: float) -> float:
    return ((N - 2.0 * a + 2.0 * b) * q - 2.0 * N) / (2.0 * q)


def mass_critical_q(N: int, a: float, b: float) -> float:
    return (4.0 + 2.0 * N) / (N - 2.0 * a + 2.0 * b)


def validate(N, a, b, q, beta, rho) -> ProblemParams:
    """Check the six raw parameters, naming the violated inequality.

    Boundary equalities (a=0, b=a, b=a+1, q=2, q=2#) are rejected: the
    admissible ranges are strict.
    """
    N = int(N)
    if N < 3:
        raise DimensionTooSmall(f"N={N}: spatial dimension must be >= 3")
    a, b, q, beta, rho = map(float, (a, b, q, beta, rho))
    if not (0.0 < a < (N - 2.0) / 2.0):
        raise WeightOutOfRange(f"a={a!r}: need 0 < a < (N-2)/2 = {(N-2)/2!r}")
    if not (a < b < a + 1.0):
        raise OffsetOutOfRange(f"b={b!r}: need a < b < a+1 with a={a!r}")
    ts = two_sharp_of(N, a, b)
    if not (2.0 < q < ts):
        raise PowerOutOfRange(f"q={q!r}: need 2 < q < 2# = {ts!r}")
    if beta < 0.0:
        raise NegativeCoefficient(f"beta={beta!r}: need beta >= 0")
    if not rho > 0.0:
        raise NonPositiveMass(f"rho={rho!r}: need rho > 0")
    return ProblemParams(N=N, a=a, b=b, q=q, beta=beta, rho=rho)


def classify_regime(q: float, q_c: float) -> Regime:
    if abs(q - q_c) <= REGIME_RTOL * q_c:
        return Regime.MASS_CRITICAL
    return Regime.SUBCRITICAL if q < q_c else Regime.SUPERCRITICAL


def derive_exponents(p: ProblemParams) -> Exponents:
    d = 1.0 + p.a - p.b
    ts = 2.0 * p.N / (p.N - 2.0 * d)
    dq = delta_of(p.N, p.a, p.b, p.q)
    q_c = mass_critical_q(p.N, p.a, p.b)
    alpha = 2.0 * d * (p.N - 2.0 - 2.0 * p.a) / (p.N - 2.0 * d)
    A = ((p.N - 2.0) / 2.0 - p.a) ** 2
    return Exponents(d=d, two_sharp=ts, delta_q=dq, q_c=q_c,
                     alpha_bubble=alpha, A_bubble=A,
                     regime=classify_regime(p.q, q_c))


def envelope_peak_height(p: ProblemParams, S_ab: float) -> float:
    """Max over t>0 of h(t) = t^(2-q dq)/2 - t^(2#-q dq)/(2# S^(2#/2)).

    This is the quantity the subcritical threshold compares against
    (beta/q) C^q rho^((1-dq)q); beta1 below is defined so that equality
    holds exactly at beta = beta1.
    """
    e = derive_exponents(p)
    qd = p.q * e.delta_q
    ts = e.two_sharp
    base = ts * S_ab ** (ts / 2.0) * (2.0 - qd) / (2.0 * (ts - qd))
    return (ts - 2.0) / (2.0 * (ts - qd)) * base ** ((2.0 - qd) / (ts - 2.0))


def thresholds(p: ProblemParams, S_ab: float, C_ab: float,
               branch: str = "auto") -> Thresholds:
    """Threshold coefficients from the supplied best constants.

    beta1 is the exact positivity threshold of the envelope function
    (beta1 = q*h_max/(C^q rho^((1-dq)q))); beta2 and the mass-critical /
    supercritical beta* branches follow their closed forms.  `branch`
    may force "mass_critical" (RegimeMismatch if q != q_c) or
    "supercritical"; "auto" selects by regime.
    """
    if not (S_ab > 0.0 and C_ab > 0.0):
        raise NonPositiveMass("S_ab and C_ab must be positive")
    e = derive_exponents(p)
    qd = p.q * e.delta_q
    ts = e.two_sharp
    N, a, b, q, rho = p.N, p.a, p.b, p.q, p.rho
    d = e.d

    if branch == "mass_critical" and e.regime is not Regime.MASS_CRITICAL:
        raise RegimeMismatch(f"q={q!r} but q_c={e.q_c!r}")

    beta1 = beta2 = beta_star_sub = None
    if qd < 2.0:
        beta1 = q * envelope_peak_height(p, S_ab) / (C_ab ** q * rho ** ((1.0 - e.delta_q) * q))
        beta2 = (2.0 * ts / (N * e.delta_q * C_ab ** q * (ts - qd) * rho ** ((1.0 - e.delta_q) * q))
                 * (qd * S_ab ** (N / (2.0 * d)) / (2.0 - qd)) ** ((2.0 - qd) / 2.0))
        beta_star_sub = min(beta1, beta2)

    # three-case beta* rule
    mass_branch = (e.regime is Regime.MASS_CRITICAL) or branch == "mass_critical"
    thr = N / (N - 2.0 * (1.0 + a) + b)
    super_conditions = (thr < e.q_c < q < ts) and (0.0 < a < max((N - 4.0) / 2.0, 0.0))
    if mass_branch:
        beta_star_crit = e.q_c / (rho ** (4.0 * d / (N - 2.0 * a + 2.0 * b))
                                  * 2.0 * C_ab ** e.q_c)
        unbounded = False
    elif q > e.q_c and super_conditions:
        beta_star_crit = (S_ab ** (N * (2.0 - qd) / (2.0 * d))
                          / (C_ab ** q * rho ** ((1.0 - e.delta_q) * q) * e.delta_q))
        unbounded = False
    else:
        beta_star_crit = None
        unbounded = True

    # N=3 side condition of the critical/supercritical existence statement:
    # for 10/(3-2a+2b) <= q < 3/(1-2a+b) one additionally needs b-a > 1/6.
    applies = False
    met = True
    if N == 3:
        lo = 10.0 / (3.0 - 2.0 * a + 2.0 * b)
        hi_den = 1.0 - 2.0 * a + b
        hi = math.inf if hi_den <= 0.0 else 3.0 / hi_den
        applies = lo <= q < hi
        if applies:
            met = (b - a) > 1.0 / 6.0

    return Thresholds(beta1=beta1, beta2=beta2, beta_star_sub=beta_star_sub,
                      beta_star_crit=beta_star_crit,
                      beta_star_crit_unbounded=unbounded,
                      S_ab=S_ab, C_ab=C_ab,
                      n3_extra_condition_applies=applies,
                      n3_extra_condition_met=met)
