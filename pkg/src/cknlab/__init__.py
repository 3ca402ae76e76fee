"""Numerical laboratory for the weighted critical-exponent normalized-solution problem."""

from .errors import CknError
from .extremals import (
    AsymptoticsPrediction,
    BubbleSpec,
    Constants,
    Quantity,
    Region,
    RegionClass,
    best_constant_S,
    best_constant_S_descent,
    bubble,
    classify_region,
    compute_constants,
    cutoff_bubble,
    interp_constant_C,
    measure_asymptotics,
    predict_asymptotics,
    region_map,
    wide_grid,
)
from .fiber import EnvelopeReport, FiberReport, analyze_fiber, envelope, project_to_manifold
from .functionals import (
    FiberCoefficients,
    SolutionReport,
    dilate,
    el_residual,
    energy,
    fiber_coefficients,
    lambda_identity,
    mass_sq,
    pohozaev,
)
from .grid import RadialFunction, RadialGrid, dirichlet_energy, make_grid, resample, weighted_norm
from .params import (
    Exponents,
    ProblemParams,
    Regime,
    Thresholds,
    derive_exponents,
    thresholds,
    validate,
)
from .solver import (
    LevelReport,
    SolverConfig,
    energy_gap_check,
    minimize_minus,
    minimize_plus,
    sweep,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
