"""Lattice geometry and first-order differential symbols.

A lattice is spanned by d independent basis vectors; its centered
fundamental cell is the set of points x = sum_j t_j a_j with
t_j in (-1/2, 1/2].  The dual basis satisfies <b_i, a_j> = 2 pi delta_ij.
Two radii summarize the geometry: r0 is half the length of the shortest
nonzero dual lattice vector (so |xi| >= 2 r0 for every nonzero dual
frequency), and r1 is half the diameter of the centered cell.

The differential operator b(D) = sum_l b_l D_l is described by its d
constant m x n coefficient matrices.  All computations here use the real
derivative convention (b(D)u = sum_l b_l du/dx_l); for real coefficient
matrices the imaginary units of the Fourier convention cancel in every
quadratic form assembled downstream, so positivity and all norms agree.
"""

from dataclasses import dataclass, field
from itertools import product

import numpy as np

__all__ = [
    "Lattice",
    "SymbolOperator",
    "EllipticityConstants",
    "DegenerateLatticeError",
    "NonEllipticSymbolError",
    "build_lattice",
    "unit_lattice",
    "symbol_eval",
    "check_rank_condition",
    "scalar_gradient_symbol",
    "elasticity_2d_symbol",
]

# dual multi-index shell scanned when minimizing |nu|; enough for basis
# condition numbers up to ~10 (documented limit)
_R0_SHELL = 3


class DegenerateLatticeError(ValueError):
    """Raised when the supplied basis vectors are linearly dependent."""


class NonEllipticSymbolError(ValueError):
    """Raised when the symbol loses rank in some sampled direction."""


@dataclass(frozen=True)
class Lattice:
    """Geometry of a periodic lattice and its centered cell.

    Attributes
    ----------
    basis : (d, d) ndarray
        Columns are the primitive vectors a_1 .. a_d.
    dual_basis : (d, d) ndarray
        Columns are the dual vectors, <b_i, a_j> = 2 pi delta_ij.
    cell_volume : float
        |det basis|, the volume of the fundamental cell.
    r0 : float
        Half the minimal nonzero dual lattice vector length.
    r1 : float
        Half the diameter of the centered cell.
    """

    basis: np.ndarray
    dual_basis: np.ndarray
    cell_volume: float
    r0: float
    r1: float

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def is_identity(self) -> bool:
        d = self.dim
        return bool(np.array_equal(self.basis, np.eye(d)))

    def is_diagonal(self) -> bool:
        off = self.basis - np.diag(np.diag(self.basis))
        return bool(np.all(off == 0.0))

    def to_fractional(self, x: np.ndarray) -> np.ndarray:
        """Map physical points (..., d) to cell-fractional coordinates mod 1."""
        t = np.asarray(x, dtype=float) @ np.linalg.inv(self.basis).T
        return np.mod(t, 1.0)


def build_lattice(basis) -> Lattice:
    """Build a Lattice from d basis vectors (rows or a (d, d) array of columns).

    The input is interpreted as a sequence of basis vectors a_j; internally
    they become the columns of the basis matrix.
    """
    vecs = np.asarray(basis, dtype=float)
    if vecs.ndim != 2 or vecs.shape[0] != vecs.shape[1]:
        raise DegenerateLatticeError(f"need d vectors of dimension d, got shape {vecs.shape}")
    a = vecs.T.copy()  # columns are basis vectors
    d = a.shape[0]
    det = np.linalg.det(a)
    if abs(det) < 1e-12 * max(1.0, float(np.abs(a).max()) ** d):
        raise DegenerateLatticeError("basis vectors are linearly dependent")
    dual = 2.0 * np.pi * np.linalg.inv(a).T

    best = np.inf
    for idx in product(range(-_R0_SHELL, _R0_SHELL + 1), repeat=d):
        if all(k == 0 for k in idx):
            continue
        best = min(best, float(np.linalg.norm(dual @ np.array(idx, dtype=float))))
    r0 = 0.5 * best

    diam = 0.0
    for delta in product((-1.0, 0.0, 1.0), repeat=d):
        diam = max(diam, float(np.linalg.norm(a @ np.array(delta))))
    r1 = 0.5 * diam

    a.setflags(write=False)
    dual.setflags(write=False)
    return Lattice(basis=a, dual_basis=dual, cell_volume=abs(det), r0=r0, r1=r1)


def unit_lattice(d: int) -> Lattice:
    """The standard integer lattice in d dimensions (unit cube cell)."""
    return build_lattice(np.eye(d))


@dataclass(frozen=True)
class SymbolOperator:
    """First-order operator b(D) = sum_l b_l d/dx_l with constant matrices.

    matrices has shape (d, m, n) with m >= n.  `name` tags the built-in
    library entries so downstream diagnostics can recognize the plain
    gradient operator.
    """

    matrices: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        mats = np.asarray(self.matrices, dtype=float)
        if mats.ndim != 3:
            raise ValueError(f"expected (d, m, n) coefficient array, got shape {mats.shape}")
        d, m, n = mats.shape
        if m < n:
            raise ValueError(f"symbol needs at least as many rows as columns, got m={m} < n={n}")
        mats = mats.copy()
        mats.setflags(write=False)
        object.__setattr__(self, "matrices", mats)

    @property
    def dim(self) -> int:
        return self.matrices.shape[0]

    @property
    def rows(self) -> int:
        return self.matrices.shape[1]

    @property
    def cols(self) -> int:
        return self.matrices.shape[2]

    def is_gradient(self) -> bool:
        """True when this is the scalar gradient (n=1, m=d, b_l = e_l)."""
        d, m, n = self.matrices.shape
        if n != 1 or m != d:
            return False
        return bool(np.allclose(self.matrices[:, :, 0], np.eye(d), atol=1e-14))


@dataclass(frozen=True)
class EllipticityConstants:
    """Spectral bounds of b(theta)* b(theta) over unit directions, plus the
    user-supplied coercivity constants of the quadratic form on H^1.

    alpha0 <= eig(b(theta)* b(theta)) <= alpha1 for |theta| = 1.
    garding_c1, garding_c2 enter the lower bound
    ||b(D)u||^2 + c2 ||u||^2 >= c1 ||Du||^2 and default to (1, 0),
    exact for the scalar gradient operator.
    """

    alpha0: float
    alpha1: float
    garding_c1: float = 1.0
    garding_c2: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.alpha0 <= self.alpha1):
            raise ValueError(f"need 0 < alpha0 <= alpha1, got {self.alpha0}, {self.alpha1}")
        if self.garding_c1 <= 0.0 or self.garding_c2 < 0.0:
            raise ValueError("garding constants must satisfy c1 > 0, c2 >= 0")


def symbol_eval(op: SymbolOperator, xi) -> np.ndarray:
    """Evaluate the symbol b(xi) = sum_l b_l xi_l, an m x n matrix."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (op.dim,):
        raise ValueError(f"direction must have length {op.dim}, got shape {xi.shape}")
    return np.einsum("l,lmn->mn", xi, op.matrices)


def _unit_directions(d: int, samples: int) -> np.ndarray:
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        ang = np.linspace(0.0, np.pi, samples, endpoint=False)
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    # quasi-uniform spherical Fibonacci points for d = 3, plain normalized
    # Halton-free fallback above
    if d == 3:
        k = np.arange(samples) + 0.5
        phi = np.arccos(1.0 - 2.0 * k / samples)
        theta = np.pi * (1.0 + 5.0**0.5) * k
        return np.stack(
            [np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1
        )
    rng = np.random.default_rng(20260815)
    v = rng.normal(size=(samples, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def check_rank_condition(
    op: SymbolOperator,
    samples: int = 4096,
    garding_c1: float = 1.0,
    garding_c2: float = 0.0,
    rank_tol: float = 1e-10,
) -> EllipticityConstants:
    """Estimate alpha0/alpha1 by sampling unit directions.

    Scans `samples` quasi-uniform directions theta, collects the extreme
    eigenvalues of b(theta)* b(theta), and rejects the symbol as
    non-elliptic if the smallest one falls below rank_tol (naming the
    failing direction).  Only real directions are scanned; rank over
    complex directions is a documented user obligation.
    """
    if samples < 1000:
        raise ValueError("need at least 1000 sample directions")
    dirs = _unit_directions(op.dim, samples)
    bmats = np.einsum("kl,lmn->kmn", dirs, op.matrices)
    grams = np.einsum("kml,kmn->kln", bmats, bmats)
    eigs = np.linalg.eigvalsh(grams)
    lo = float(eigs[:, 0].min())
    hi = float(eigs[:, -1].max())
    if lo < rank_tol:
        bad = dirs[int(np.argmin(eigs[:, 0]))]
        raise NonEllipticSymbolError(
            f"symbol loses rank near direction {np.round(bad, 6).tolist()} "
            f"(smallest eigenvalue {lo:.3e})"
        )
    return EllipticityConstants(alpha0=lo, alpha1=hi, garding_c1=garding_c1, garding_c2=garding_c2)


def scalar_gradient_symbol(d: int) -> SymbolOperator:
    """b(D) = gradient: n = 1, m = d, b_l = e_l.  alpha0 = alpha1 = 1."""
    mats = np.zeros((d, d, 1))
    for l in range(d):
        mats[l, l, 0] = 1.0
    return SymbolOperator(mats, name="scalar_gradient")


def elasticity_2d_symbol() -> SymbolOperator:
    """Planar symmetrized-gradient operator in scaled Voigt form.

    Rows are (e_11, e_22, sqrt(2) e_12) so that |b(xi) u|^2 equals the
    Frobenius norm of the symmetrized tensor; the shear row carries
    1/sqrt(2).  Eigenvalues of b(theta)* b(theta) are {1/2, 1} for every
    unit theta, so alpha0 = 1/2 and alpha1 = 1.
    """
    s = 1.0 / np.sqrt(2.0)
    b1 = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, s]])
    b2 = np.array([[0.0, 0.0], [0.0, 1.0], [s, 0.0]])
    return SymbolOperator(np.stack([b1, b2]), name="elasticity_2d")
