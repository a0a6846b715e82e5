"""Periodic cell problem, effective matrix, Voigt-Reuss bounds.

For each unit vector e_j in R^m we seek the zero-mean periodic field v_j
with

    integral over cell of < g (b(D)v_j + e_j), b(D)eta > = 0   for all eta.

The m columns form the corrector matrix.  The flux coefficient
gtilde(x) = g(x)(b(D)corrector + 1) has cell average g_eff, the constant
matrix that the oscillating operator homogenizes to.  Both bounds of the
Voigt-Reuss sandwich are computed from the same element samples as the
stiffness, so the sandwich holds discretely up to solver tolerance.

The periodic stiffness is singular exactly on per-component constants
(full 2^d-point Gauss quadrature leaves no spurious zero-energy modes);
CG runs deflated by the component means.
"""

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .assembly import assemble_operator, assemble_symbol_load
from .coefficients import PeriodicCoefficient
from .discretization import (
    Grid,
    apply_symbol_midpoint,
    h1_seminorm,
    l2_norm,
    sample_coefficient,
    symbol_blocks,
)
from .lattice_symbol import EllipticityConstants, SymbolOperator
from .solvers import SolveStats, solve_spd

__all__ = [
    "CellSolution",
    "solve_cell_problem",
    "effective_matrix",
    "voigt_reuss",
    "structural_diagnostics",
]


@dataclass
class CellSolution:
    """Discrete corrector and effective data on one periodicity cell.

    corrector has shape (n_nodes, n, m): column j responds to the constant
    symbol excitation e_j.  g_tilde is per-element (E, m, m).
    """

    grid: Grid
    op: SymbolOperator
    corrector: np.ndarray
    bD_corrector: np.ndarray
    g_tilde: np.ndarray
    g_eff: np.ndarray
    g_bar: np.ndarray
    g_under: np.ndarray
    g_sup: float
    g_inv_sup: float
    corrector_l2: float
    corrector_sup: float
    dcorrector_l2: float
    tol: float
    stats: list = dataclass_field(default_factory=list)

    @property
    def is_corrector_free(self) -> bool:
        """Whether the corrector vanishes to solver accuracy."""
        return self.corrector_sup <= 10.0 * self.tol


def voigt_reuss(ghat: np.ndarray):
    """Arithmetic and harmonic mean matrices of per-element samples."""
    ghat = np.asarray(ghat, dtype=float)
    g_bar = ghat.mean(axis=0)
    g_under = np.linalg.inv(np.linalg.inv(ghat).mean(axis=0))
    g_bar = 0.5 * (g_bar + g_bar.T)
    g_under = 0.5 * (g_under + g_under.T)
    return g_bar, g_under


def effective_matrix(ghat: np.ndarray, bD_corrector: np.ndarray):
    """Cell average of gtilde = g (b(D)corrector + 1); returns (g_eff, g_tilde).

    The midpoint value of b(D)corrector equals its element average, so the
    mean below is the exact integral of the Q1 solution.
    """
    E, m, _ = np.asarray(ghat).shape
    eye = np.eye(m)
    g_tilde = np.einsum("ers,esj->erj", ghat, bD_corrector + eye)
    g_eff = g_tilde.mean(axis=0)
    return 0.5 * (g_eff + g_eff.T), g_tilde


def solve_cell_problem(coef: PeriodicCoefficient, op: SymbolOperator, grid: Grid,
                       tol: float = 1e-10) -> CellSolution:
    """Solve the m column problems and assemble the effective data."""
    if not grid.periodic:
        raise ValueError("the cell problem lives on a periodic grid")
    if coef.size != op.rows:
        raise ValueError(f"coefficient size {coef.size} != symbol rows {op.rows}")
    ghat = sample_coefficient(grid, coef, validate=True)
    blocks = symbol_blocks(grid, op)
    K = assemble_operator(grid, blocks, ghat, lam=0.0)

    n = op.cols
    m = op.rows
    P = grid.n_nodes

    def demean(v):
        w = v.reshape(P, n)
        return (w - w.mean(axis=0)).ravel()

    corrector = np.zeros((P, n, m))
    stats = []
    for j in range(m):
        load = assemble_symbol_load(grid, blocks, ghat[:, :, j])
        x, st = solve_spd(K, -load, tol=tol, maxiter=10 * P * n, project=demean)
        corrector[:, :, j] = x.reshape(P, n) - x.reshape(P, n).mean(axis=0)
        stats.append(st)

    bD = np.stack(
        [apply_symbol_midpoint(grid, op, corrector[:, :, j], blocks) for j in range(m)],
        axis=2,
    )
    g_eff, g_tilde = effective_matrix(ghat, bD)
    g_bar, g_under = voigt_reuss(ghat)
    eigs = np.linalg.eigvalsh(ghat)
    return CellSolution(
        grid=grid,
        op=op,
        corrector=corrector,
        bD_corrector=bD,
        g_tilde=g_tilde,
        g_eff=g_eff,
        g_bar=g_bar,
        g_under=g_under,
        g_sup=float(eigs.max()),
        g_inv_sup=float(1.0 / eigs.min()),
        corrector_l2=l2_norm(grid, corrector),
        corrector_sup=float(np.abs(corrector).max()),
        dcorrector_l2=h1_seminorm(grid, corrector),
        tol=tol,
        stats=stats,
    )


def structural_diagnostics(sol: CellSolution, constants: EllipticityConstants) -> dict:
    """Norm-bound and special-case checks for a solved cell problem.

    The corrector norm bounds scale like sqrt(cell volume times m divided
    by alpha0) times the square root of the coefficient contrast; the
    corrector itself gains the extra factor 1/(2 r0).  The sup norm is
    estimated from nodal values, an underestimate for rough coefficients.
    """
    grid = sol.grid
    lattice = grid.lattice
    if lattice is None:
        raise ValueError("cell solution grid carries no lattice")
    m = sol.op.rows
    n = sol.op.cols
    contrast = np.sqrt(sol.g_sup * sol.g_inv_sup)
    base = np.sqrt(grid.volume * m / constants.alpha0) * contrast
    dbound = float(base)
    lbound = float(base / (2.0 * lattice.r0))
    geff_norm = float(np.linalg.norm(sol.g_eff, 2))

    mean_residual = float(np.abs(sol.corrector.mean(axis=0)).max())
    sandwich_upper = float(np.linalg.eigvalsh(sol.g_bar - sol.g_eff).min())
    sandwich_lower = float(np.linalg.eigvalsh(sol.g_eff - sol.g_under).min())

    bounded_cases = {
        "low_dimension": grid.dim <= 2,
        "scalar_real": sol.op.is_gradient(),
        "effective_equals_harmonic": bool(
            np.linalg.norm(sol.g_eff - sol.g_under, 2) <= 10.0 * sol.tol * max(1.0, geff_norm)
        ),
    }
    return {
        "dcorrector_l2": sol.dcorrector_l2,
        "dcorrector_bound": dbound,
        "dcorrector_ok": sol.dcorrector_l2 <= dbound + 1e-6,
        "corrector_l2": sol.corrector_l2,
        "corrector_bound": lbound,
        "corrector_ok": sol.corrector_l2 <= lbound + 1e-6,
        "corrector_sup_estimate": sol.corrector_sup,
        "g_eff_norm": geff_norm,
        "g_eff_norm_bound": sol.g_sup,
        "g_eff_norm_ok": geff_norm <= sol.g_sup + 1e-6,
        "zero_mean_residual": mean_residual,
        "sandwich_upper_min_eig": sandwich_upper,
        "sandwich_lower_min_eig": sandwich_lower,
        "square_symbol": m == n,
        "corrector_bounded_cases": bounded_cases,
        "corrector_bounded": any(bounded_cases.values()),
    }
