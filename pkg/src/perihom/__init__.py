"""Periodic homogenization toolkit.

Computes cell correctors and effective matrices for matrix elliptic
operators with lattice-periodic coefficients, solves the oscillating and
homogenized Neumann problems on rectangles and tori, builds first-order
corrector approximations, and runs convergence-rate studies.
"""

__version__ = "0.1.0"

from .lattice_symbol import (
    Lattice,
    SymbolOperator,
    EllipticityConstants,
    build_lattice,
    unit_lattice,
    scalar_gradient_symbol,
    elasticity_2d_symbol,
    check_rank_condition,
)
from .coefficients import (
    PeriodicCoefficient,
    constant_coefficient,
    trig_coefficient,
    laminate_coefficient,
    checkerboard_coefficient,
    diag_cross_coefficient,
    grid_sample_coefficient,
)
from .discretization import (
    Grid,
    cell_grid,
    domain_grid,
    l2_norm,
    h1_seminorm,
    h1_norm,
    write_field_csv,
    read_field_csv,
)
from .cell_problem import CellSolution, solve_cell_problem
from .solvers import (
    ProblemSpec,
    SolveStats,
    SolverFailure,
    solve_problem,
    solve_lambda0,
)
from .smoothing import steklov_smooth, smoothing_support_nodes, OutOfSupportError
from .approximation import (
    ExtendedField,
    extend_h2,
    corrector_smoothed,
    corrector_plain,
    flux,
    flux_approx_smoothed,
    flux_approx_plain,
)
from .harness import (
    StudyPlan,
    ConvergenceReport,
    StudyError,
    RateFit,
    rate_fit,
    run_study,
)
from .config import (
    Config,
    ConfigError,
    parse_config,
    load_config,
    emit_config,
    config_hash,
)
from .selftest import run_selftest

__all__ = [
    "Lattice",
    "SymbolOperator",
    "EllipticityConstants",
    "build_lattice",
    "unit_lattice",
    "scalar_gradient_symbol",
    "elasticity_2d_symbol",
    "check_rank_condition",
    "PeriodicCoefficient",
    "constant_coefficient",
    "trig_coefficient",
    "laminate_coefficient",
    "checkerboard_coefficient",
    "diag_cross_coefficient",
    "grid_sample_coefficient",
    "Grid",
    "cell_grid",
    "domain_grid",
    "l2_norm",
    "h1_seminorm",
    "h1_norm",
    "write_field_csv",
    "read_field_csv",
    "CellSolution",
    "solve_cell_problem",
    "ProblemSpec",
    "SolveStats",
    "SolverFailure",
    "solve_problem",
    "solve_lambda0",
    "steklov_smooth",
    "smoothing_support_nodes",
    "OutOfSupportError",
    "ExtendedField",
    "extend_h2",
    "corrector_smoothed",
    "corrector_plain",
    "flux",
    "flux_approx_smoothed",
    "flux_approx_plain",
    "StudyPlan",
    "ConvergenceReport",
    "StudyError",
    "RateFit",
    "rate_fit",
    "run_study",
    "Config",
    "ConfigError",
    "parse_config",
    "load_config",
    "emit_config",
    "config_hash",
    "run_selftest",
    "__version__",
]
