"""Discrete Neumann and torus problems and their conjugate-gradient solver.

Four problem kinds share one assembly path:

    neumann_eps   oscillating coefficient g(x/eps) on a rectangle
    neumann_eff   constant effective matrix on a rectangle
    periodic_eps  oscillating coefficient on a torus (whole-space proxy)
    periodic_eff  constant effective matrix on a torus

The rectangle problems realize the zero-conormal boundary condition
naturally (nothing is constrained).  Torus problems require lam > 0 so the
shifted operator is definite; the lam = 0 rectangle case is handled by
deflated CG on the orthogonal complement of the finite-dimensional kernel
{z : b(D)z = 0}, which for the scalar gradient operator is the constants.

The solver is plain preconditioned CG with diagonal (Jacobi) scaling.
Deterministic: fixed iteration order, no randomness, so repeated runs give
bit-identical iterates.
"""

import math
from dataclasses import dataclass

import numpy as np

from .assembly import (
    apply_mass,
    assemble_mass_load,
    assemble_operator,
)
from .coefficients import PeriodicCoefficient
from .discretization import (
    Grid,
    apply_symbol_midpoint,
    element_l2_norm,
    sample_coefficient,
    symbol_blocks,
)
from .lattice_symbol import EllipticityConstants, Lattice, SymbolOperator

__all__ = [
    "ProblemSpec",
    "KernelBasis",
    "AssembledProblem",
    "SolveStats",
    "SolverFailure",
    "ConfigurationError",
    "InvalidKernelError",
    "conjugate_gradient",
    "solve_spd",
    "assemble",
    "solve_problem",
    "build_kernel",
    "solve_lambda0",
]

PROBLEM_KINDS = ("neumann_eps", "neumann_eff", "periodic_eps", "periodic_eff")


class SolverFailure(RuntimeError):
    """Iteration cap exceeded or definiteness lost; carries solve stats."""

    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = stats


class ConfigurationError(ValueError):
    """Problem setup violates a solvability requirement."""


class InvalidKernelError(ValueError):
    """Declared kernel field is not annihilated by the symbol operator."""


@dataclass
class SolveStats:
    iterations: int
    residual: float
    converged: bool


@dataclass
class ProblemSpec:
    """One discrete problem: operator kind, grid, data.

    Oscillating kinds need (coefficient, lattice, eps); effective kinds a
    constant matrix.  rhs holds nodal samples of F, shape (n_nodes, n).
    """

    kind: str
    grid: Grid
    op: SymbolOperator
    rhs: np.ndarray
    lam: float = 1.0
    coefficient: PeriodicCoefficient = None
    lattice: Lattice = None
    eps: float = None
    effective: np.ndarray = None
    constants: EllipticityConstants = None

    def __post_init__(self):
        if self.kind not in PROBLEM_KINDS:
            raise ConfigurationError(f"unknown problem kind {self.kind!r}")
        self.rhs = np.asarray(self.rhs, dtype=float)
        if self.rhs.shape != (self.grid.n_nodes, self.op.cols):
            raise ConfigurationError(
                f"rhs shape {self.rhs.shape} != {(self.grid.n_nodes, self.op.cols)}"
            )
        if self.lam < 0.0:
            raise ConfigurationError("lam must be nonnegative")
        periodic_kind = self.kind.startswith("periodic")
        if periodic_kind != self.grid.periodic:
            raise ConfigurationError(f"kind {self.kind} requires grid.periodic={periodic_kind}")
        if periodic_kind and self.lam <= 0.0:
            raise ConfigurationError("torus problems require lam > 0")
        if self.kind.endswith("_eps"):
            if self.coefficient is None or self.lattice is None or self.eps is None:
                raise ConfigurationError("oscillating kind needs coefficient, lattice and eps")
            if self.eps <= 0.0:
                raise ConfigurationError("eps must be positive")
            if periodic_kind:
                # the torus must tile into whole eps-cells for the
                # rescaled coefficient to wrap consistently
                frac = np.linalg.solve(self.eps * self.lattice.basis, self.grid.axes_matrix)
                if np.abs(frac - np.round(frac)).max() > 1e-9:
                    raise ConfigurationError("torus size is not a whole number of eps-cells")
        else:
            if self.effective is None:
                raise ConfigurationError("effective kind needs the constant matrix")
            self.effective = np.asarray(self.effective, dtype=float)
            if self.effective.shape != (self.op.rows, self.op.rows):
                raise ConfigurationError("effective matrix has wrong shape")

    def coefficient_samples(self) -> np.ndarray:
        if self.kind.endswith("_eps"):
            return sample_coefficient(self.grid, self.coefficient,
                                      lattice=self.lattice, eps=self.eps)
        return np.broadcast_to(
            self.effective, (self.grid.n_elements,) + self.effective.shape
        ).copy()


@dataclass
class AssembledProblem:
    matrix: object  # csr
    rhs: np.ndarray
    blocks: object
    ghat: np.ndarray


@dataclass
class KernelBasis:
    """L2-orthonormal basis of the discrete kernel {z : b(D)z = 0}."""

    grid: Grid
    fields: np.ndarray  # (k, n_nodes, n)
    gram: np.ndarray

    @property
    def size(self) -> int:
        return self.fields.shape[0]

    def project_off(self, values: np.ndarray) -> np.ndarray:
        """Remove the L2-orthogonal projection onto the kernel from a nodal field."""
        out = np.array(values, dtype=float)
        mv = apply_mass(self.grid, out)
        for z in self.fields:
            out -= float(np.vdot(z, mv)) * z
        return out


def conjugate_gradient(A, b, tol: float = 1e-10, maxiter: int = None,
                       x0=None, project=None):
    """Jacobi-preconditioned CG; returns (x, SolveStats).

    `project`, if given, is applied to the initial guess, the initial
    residual, and every preconditioned direction, confining the iteration
    to an invariant subspace (used to deflate a known kernel).  The true
    residual is re-measured at the end; if recurrence drift left it above
    tolerance the iteration restarts from the current x within the same
    overall budget.
    """
    b = np.asarray(b, dtype=float)
    ndof = b.shape[0]
    if maxiter is None:
        maxiter = 10 * ndof
    diag = np.asarray(A.diagonal(), dtype=float)
    good = diag > 0
    invd = np.where(good, 1.0 / np.where(good, diag, 1.0), 1.0)

    x = np.zeros(ndof) if x0 is None else np.array(x0, dtype=float)
    if project is not None:
        x = project(x)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(ndof), SolveStats(0, 0.0, True)

    target = tol * bnorm
    total_it = 0
    while True:
        r = b - A @ x
        if project is not None:
            r = project(r)
        rnorm = float(np.linalg.norm(r))
        if rnorm <= target or total_it >= maxiter:
            return x, SolveStats(total_it, rnorm / bnorm, rnorm <= target)
        z = invd * r
        if project is not None:
            z = project(z)
        p = z.copy()
        rz = float(r @ z)
        while total_it < maxiter:
            Ap = A @ p
            pAp = float(p @ Ap)
            if pAp <= 0.0:
                raise SolverFailure(
                    "operator lost positive definiteness on the iteration subspace",
                    SolveStats(total_it, rnorm / bnorm, False),
                )
            alpha = rz / pAp
            x += alpha * p
            r -= alpha * Ap
            total_it += 1
            rnorm = float(np.linalg.norm(r))
            if rnorm <= target:
                break
            z = invd * r
            if project is not None:
                z = project(z)
            rz_new = float(r @ z)
            p = z + (rz_new / rz) * p
            rz = rz_new
        # loop back to re-measure the true residual


def solve_spd(A, b, tol: float = 1e-10, maxiter: int = None, x0=None, project=None):
    """CG wrapper that raises SolverFailure when the cap is exceeded."""
    x, stats = conjugate_gradient(A, b, tol=tol, maxiter=maxiter, x0=x0, project=project)
    if not stats.converged:
        raise SolverFailure(
            f"CG did not reach tolerance {tol:g}: relative residual "
            f"{stats.residual:.3e} after {stats.iterations} iterations",
            stats,
        )
    return x, stats


def assemble(spec: ProblemSpec) -> AssembledProblem:
    """Assemble the operator and consistent-mass load for a problem spec."""
    blocks = symbol_blocks(spec.grid, spec.op)
    ghat = spec.coefficient_samples()
    if spec.lam > 0.0 and not spec.grid.periodic and spec.constants is not None:
        c2 = spec.constants.garding_c2
        if c2 > 0.0:
            gmin = float(np.linalg.eigvalsh(ghat).min())
            if spec.lam <= c2 * gmin:
                raise ConfigurationError(
                    f"lam={spec.lam} is not above the coercivity threshold "
                    f"{c2 * gmin:.6g} for this coefficient"
                )
    A = assemble_operator(spec.grid, blocks, ghat, lam=spec.lam)
    rhs_vec = assemble_mass_load(spec.grid, spec.rhs)
    return AssembledProblem(matrix=A, rhs=rhs_vec, blocks=blocks, ghat=ghat)


def solve_problem(spec: ProblemSpec, tol: float = 1e-10, x0=None,
                  assembled: AssembledProblem = None):
    """Solve a lam > 0 problem; returns (u, stats, assembled).

    u is nodal, shape (n_nodes, n).  Use solve_lambda0 for lam = 0.
    """
    if spec.lam <= 0.0:
        raise ConfigurationError("lam = 0 needs the kernel-constrained path (solve_lambda0)")
    if assembled is None:
        assembled = assemble(spec)
    guess = None if x0 is None else np.asarray(x0, dtype=float).ravel()
    x, stats = solve_spd(assembled.matrix, assembled.rhs, tol=tol, x0=guess)
    return x.reshape(spec.grid.n_nodes, spec.op.cols), stats, assembled


def build_kernel(op: SymbolOperator, grid: Grid, declared=None) -> KernelBasis:
    """Orthonormal basis of {z : b(D)z = 0} in discrete L2.

    With no declaration the basis defaults to the per-component constants,
    which are annihilated by any first-order symbol.  Declared fields are
    verified (element-midpoint residual below 1e-8) and orthonormalized
    with the consistent mass inner product.
    """
    n = op.cols
    if declared is None:
        scale = 1.0 / math.sqrt(grid.volume)
        fields = np.zeros((n, grid.n_nodes, n))
        for i in range(n):
            fields[i, :, i] = scale
    else:
        fields = np.array([np.asarray(z, dtype=float) for z in declared])
        if fields.ndim != 3 or fields.shape[1:] != (grid.n_nodes, n):
            raise InvalidKernelError("declared kernel fields have wrong shape")
        for k, z in enumerate(fields):
            res = element_l2_norm(grid, apply_symbol_midpoint(grid, op, z))
            if res > 1e-8 * max(1.0, float(np.abs(z).max())):
                raise InvalidKernelError(
                    f"declared kernel field {k} has symbol residual {res:.3e}"
                )
    # Gram-Schmidt in the mass inner product
    ortho = []
    for z in fields:
        w = z.copy()
        for q in ortho:
            w -= float(np.vdot(q, apply_mass(grid, w))) * q
        nrm = math.sqrt(max(float(np.vdot(w, apply_mass(grid, w))), 0.0))
        if nrm <= 1e-12:
            raise InvalidKernelError("declared kernel fields are linearly dependent")
        ortho.append(w / nrm)
    fields = np.stack(ortho)
    gram = np.array([[float(np.vdot(a, apply_mass(grid, b))) for b in fields] for a in fields])
    return KernelBasis(grid=grid, fields=fields, gram=gram)


def solve_lambda0(spec: ProblemSpec, kernel: KernelBasis = None, tol: float = 1e-10,
                  x0=None, assembled: AssembledProblem = None):
    """Solve the lam = 0 problem on the orthogonal complement of the kernel.

    The load is first projected off the kernel (making the singular system
    consistent), CG runs deflated by the Euclidean span of the kernel
    vectors, and the result is finally re-projected in the mass inner
    product so (u, z) = 0 holds to rounding.

    Returns (u, stats, assembled, kernel).
    """
    if spec.lam != 0.0:
        raise ConfigurationError("solve_lambda0 expects lam = 0")
    if spec.grid.periodic:
        raise ConfigurationError("torus problems require lam > 0")
    if kernel is None:
        kernel = build_kernel(spec.op, spec.grid)
    if assembled is None:
        assembled = assemble(spec)
    f_perp = kernel.project_off(spec.rhs)
    assembled.rhs = assemble_mass_load(spec.grid, f_perp)

    # Euclidean-orthonormal kernel vectors for in-iteration deflation
    Z = kernel.fields.reshape(kernel.size, -1).T
    Q, _ = np.linalg.qr(Z)

    def deflate(v):
        return v - Q @ (Q.T @ v)

    guess = None if x0 is None else np.asarray(x0, dtype=float).ravel()
    x, stats = solve_spd(assembled.matrix, assembled.rhs, tol=tol, x0=guess, project=deflate)
    u = kernel.project_off(x.reshape(spec.grid.n_nodes, spec.op.cols))
    return u, stats, assembled, kernel
