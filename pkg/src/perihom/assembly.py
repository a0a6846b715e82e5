"""Q1 assembly of the discrete forms.

Degrees of freedom are laid out node-major: dof = node * n + component,
matching the C-order ravel of nodal arrays shaped (n_nodes, n).  The
bilinear form is

    a[u, v] = sum_e vol_e < ghat_e b(D)u, b(D)v >_quad + lam (u, v)_mass

with the coefficient frozen at the element midpoint and a consistent
(tensor-product) mass matrix.  Natural boundary treatment: no rows are
constrained, so the assembled operator realizes the zero-conormal
boundary condition weakly.
"""

import numpy as np
import scipy.sparse as sp

from .discretization import Grid, SymbolBlocks

__all__ = [
    "assemble_operator",
    "assemble_mass_load",
    "assemble_symbol_load",
    "apply_mass",
    "mass_inner",
]


def assemble_operator(grid: Grid, blocks: SymbolBlocks, ghat: np.ndarray,
                      lam: float = 0.0) -> sp.csr_array:
    """Stiffness plus lam times consistent mass, as CSR.

    ghat is (E, m, m) per-element coefficient samples.
    """
    E = grid.n_elements
    ghat = np.asarray(ghat, dtype=float)
    if ghat.shape[0] != E:
        raise ValueError(f"expected {E} coefficient samples, got {ghat.shape[0]}")
    m = blocks.pair.shape[0]
    n = blocks.mid.shape[2]
    CN = blocks.pair.shape[2]
    vol = grid.element_volume
    Ke = np.einsum("ers,rsAB->eAB", ghat, blocks.pair) * vol
    if lam != 0.0:
        Ke += lam * vol * np.kron(grid.mass_ref, np.eye(n))[None, :, :]
    dof = (grid.connectivity[:, :, None] * n + np.arange(n)).reshape(E, CN)
    rows = np.broadcast_to(dof[:, :, None], (E, CN, CN)).ravel()
    cols = np.broadcast_to(dof[:, None, :], (E, CN, CN)).ravel()
    ndof = grid.n_nodes * n
    A = sp.coo_array((Ke.ravel(), (rows, cols)), shape=(ndof, ndof)).tocsr()
    A.sum_duplicates()
    return A


def _scatter(grid: Grid, local: np.ndarray, n: int) -> np.ndarray:
    """Accumulate per-element local vectors (E, C, n) into a dof vector."""
    E, C = grid.connectivity.shape
    dof = (grid.connectivity[:, :, None] * n + np.arange(n)).ravel()
    return np.bincount(dof, weights=local.ravel(), minlength=grid.n_nodes * n)


def apply_mass(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Consistent mass matrix applied to a nodal field, without assembling it."""
    values = np.asarray(values, dtype=float)
    two_d = values.ndim == 1
    if two_d:
        values = values[:, None]
    n = values.shape[1]
    U = values[grid.connectivity]
    local = grid.element_volume * np.einsum("ab,ebn->ean", grid.mass_ref, U)
    out = _scatter(grid, local, n).reshape(grid.n_nodes, n)
    return out[:, 0] if two_d else out


def mass_inner(grid: Grid, u: np.ndarray, v: np.ndarray) -> float:
    """Discrete L2 inner product (consistent mass)."""
    return float(np.vdot(apply_mass(grid, u), v))


def assemble_mass_load(grid: Grid, f_nodal: np.ndarray) -> np.ndarray:
    """Load vector for (f, eta)_L2 from nodal samples of f: returns (ndof,)."""
    return apply_mass(grid, np.asarray(f_nodal, dtype=float)).ravel()


def assemble_symbol_load(grid: Grid, blocks: SymbolBlocks, cell_data: np.ndarray) -> np.ndarray:
    """Load vector for sum_e vol_e < c_e, b(D)eta > from per-element m-vectors.

    The midpoint symbol table equals the quadrature average for Q1, so this
    is the exact Gauss integral of the element-constant data against the
    test gradients.
    """
    cell_data = np.asarray(cell_data, dtype=float)
    if cell_data.shape != (grid.n_elements, blocks.mid.shape[0]):
        raise ValueError("cell data must be one m-vector per element")
    local = grid.element_volume * np.einsum("rai,er->eai", blocks.mid, cell_data)
    n = blocks.mid.shape[2]
    return _scatter(grid, local, n)
