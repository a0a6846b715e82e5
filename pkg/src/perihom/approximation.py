"""First-order approximations: extension, correctors, and flux targets."""

import warnings
from dataclasses import dataclass

import numpy as np

from .cell_problem import CellSolution
from .discretization import (
    Grid,
    apply_symbol_midpoint,
    apply_symbol_nodal,
    interpolate_nodes,
    l2_norm,
    nodal_gradient,
    sample_coefficient,
)
from .smoothing import smoothing_support_nodes, steklov_smooth


@dataclass
class ExtendedField:
    """A nodal field continued past the box boundary onto a margin."""

    grid: Grid
    values: np.ndarray
    margin: tuple
    base_grid: Grid
    h2_ratio: float

    def restrict(self, values=None) -> np.ndarray:
        """Drop the margin; identity on the shared nodes."""
        vals = self.values if values is None else np.asarray(values)
        comp = vals.shape[1:]
        arr = vals.reshape(self.grid.node_shape + comp)
        sl = tuple(
            slice(m, m + s + 1) for m, s in zip(self.margin, self.base_grid.shape)
        )
        return arr[sl].reshape((self.base_grid.n_nodes,) + comp)


def discrete_h2_norm(grid: Grid, values) -> float:
    """Nodal-difference Sobolev norm with value, gradient, and curvature."""
    g1 = nodal_gradient(grid, values)
    g2 = nodal_gradient(grid, g1)
    sq = l2_norm(grid, values) ** 2 + l2_norm(grid, g1) ** 2 + l2_norm(grid, g2) ** 2
    return float(np.sqrt(sq))


def _extend_axis(arr, axis: int, m: int):
    # mirror fill with weights 6, -8, 3: one-sided value, slope, and
    # curvature stay continuous, so squares survive the reflection
    n = arr.shape[axis]
    if m < 1:
        raise ValueError("margin must be at least one node")
    if 3 * m > n - 1:
        raise ValueError(f"margin {m} needs {3 * m + 1} nodes, axis has {n}")
    out_shape = list(arr.shape)
    out_shape[axis] = n + 2 * m
    out = np.empty(out_shape, dtype=arr.dtype)
    sl = [slice(None)] * arr.ndim
    sl[axis] = slice(m, m + n)
    out[tuple(sl)] = arr

    def grab(i):
        return np.take(arr, i, axis=axis)

    def put(i, val):
        sl[axis] = i
        out[tuple(sl)] = val

    for k in range(1, m + 1):
        put(m - k, 6.0 * grab(k) - 8.0 * grab(2 * k) + 3.0 * grab(3 * k))
        put(
            m + n - 1 + k,
            6.0 * grab(n - 1 - k) - 8.0 * grab(n - 1 - 2 * k) + 3.0 * grab(n - 1 - 3 * k),
        )
    return out


def extend_h2(grid: Grid, values, margin) -> ExtendedField:
    """Continue a nodal field onto a margin of extra nodes per face.

    Reflection fills one axis at a time; later axes read the strips the
    earlier ones produced, which populates the corners.  Polynomials of
    degree two or less extend exactly.
    """
    if grid.periodic:
        raise ValueError("periodic fields wrap; extension applies to boxes")
    if np.isscalar(margin):
        margin = (int(margin),) * grid.dim
    else:
        margin = tuple(int(m) for m in margin)
    values = np.asarray(values, dtype=float)
    comp = values.shape[1:]
    arr = values.reshape(grid.node_shape + comp)
    for axis, m in enumerate(margin):
        arr = _extend_axis(arr, axis, m)

    frac = np.asarray(margin, dtype=float) / np.asarray(grid.shape, dtype=float)
    ext_grid = Grid(
        shape=tuple(s + 2 * m for s, m in zip(grid.shape, margin)),
        periodic=False,
        axes_matrix=grid.axes_matrix @ np.diag(1.0 + 2.0 * frac),
        origin=grid.origin - grid.axes_matrix @ frac,
        lattice=grid.lattice,
    )
    ext_values = arr.reshape((ext_grid.n_nodes,) + comp)
    base = discrete_h2_norm(grid, values)
    ratio = discrete_h2_norm(ext_grid, ext_values) / base if base > 0 else 1.0
    return ExtendedField(
        grid=ext_grid,
        values=ext_values,
        margin=margin,
        base_grid=grid,
        h2_ratio=float(ratio),
    )


def corrector_at(cell: CellSolution, points, eps: float) -> np.ndarray:
    """Cell corrector matrix at physical points x, read as Lambda(x/eps).

    Multilinear interpolation on the periodic cell grid; returns (K, n, m).
    """
    lattice = cell.grid.lattice
    t = lattice.to_fractional(np.asarray(points, dtype=float) / eps)
    return interpolate_nodes(cell.grid, cell.corrector, t)


def _cell_element_lookup(cell: CellSolution, points, eps: float) -> np.ndarray:
    """Piecewise-constant element data of the cell, read at x/eps."""
    lattice = cell.grid.lattice
    t = np.mod(lattice.to_fractional(np.asarray(points, dtype=float) / eps), 1.0)
    shape = np.asarray(cell.grid.shape)
    idx = np.minimum(np.floor(t * shape).astype(np.int64), shape - 1)
    flat = np.ravel_multi_index(tuple(idx.T), cell.grid.shape)
    return cell.g_tilde[flat]


def smoothing_margin(grid: Grid, lattice, eps: float) -> tuple:
    """Extension margin (nodes per face) that covers the averaging window."""
    return tuple(int(s) + 1 for s in smoothing_support_nodes(grid, lattice, eps))


def smoothed_symbol_gradient(
    grid: Grid, u0, cell: CellSolution, eps: float, margin=None, points=None
) -> np.ndarray:
    """Cell-averaged symbol gradient of u0 at the nodes of its grid.

    On a torus the field wraps and is smoothed in place.  On a box the
    field is first continued onto a margin so every averaging window
    reads real data, then the result is restricted back.
    """
    lattice = cell.grid.lattice
    if grid.periodic:
        w = apply_symbol_nodal(grid, cell.op, u0)
        return steklov_smooth(grid, w, eps, lattice, points=points)
    if margin is None:
        margin = smoothing_margin(grid, lattice, eps)
    ext = extend_h2(grid, u0, margin)
    w = apply_symbol_nodal(ext.grid, cell.op, ext.values)
    lo = list(ext.margin)
    hi = [m + s for m, s in zip(ext.margin, grid.shape)]
    sw = steklov_smooth(ext.grid, w, eps, lattice, points=points, region=(lo, hi))
    return ext.restrict(sw)


def corrector_smoothed(
    grid: Grid,
    u0,
    cell: CellSolution,
    eps: float,
    margin=None,
    points=None,
    smoothed_grad=None,
) -> np.ndarray:
    """First-order approximation with a cell-averaged gradient factor.

    Returns u0 + eps * Lambda(x/eps) applied to the smoothed symbol
    gradient, node for node on u0's grid.  Pass smoothed_grad to reuse
    one already computed for the matching flux target.
    """
    u0 = np.asarray(u0, dtype=float)
    if smoothed_grad is None:
        smoothed_grad = smoothed_symbol_gradient(
            grid, u0, cell, eps, margin=margin, points=points
        )
    lam = corrector_at(cell, grid.nodes(), eps)
    return u0 + eps * np.einsum("pij,pj->pi", lam, smoothed_grad)


def corrector_plain(
    grid: Grid, u0, cell: CellSolution, eps: float, grad=None
) -> np.ndarray:
    """First-order approximation without extension or averaging.

    Uses the in-domain nodal symbol gradient unless one is supplied.
    Reliable only when the cell corrector is uniformly bounded; a large
    sup estimate triggers a warning, not a failure.
    """
    if cell.corrector_sup > 1e3:
        warnings.warn(
            f"cell corrector sup estimate {cell.corrector_sup:.3g} is large; "
            "the unsmoothed approximation may be inaccurate",
            RuntimeWarning,
            stacklevel=2,
        )
    u0 = np.asarray(u0, dtype=float)
    if grad is None:
        grad = apply_symbol_nodal(grid, cell.op, u0)
    lam = corrector_at(cell, grid.nodes(), eps)
    return u0 + eps * np.einsum("pij,pj->pi", lam, grad)


def flux(grid: Grid, op, u, coef, eps=None, lattice=None) -> np.ndarray:
    """Coefficient times symbol gradient at element midpoints: (E, m).

    `coef` is either a periodic coefficient (sampled at x/eps when eps is
    given) or pre-sampled element data of shape (E, m, m).
    """
    bdu = apply_symbol_midpoint(grid, op, u)
    if isinstance(coef, np.ndarray):
        ghat = coef
    else:
        ghat = sample_coefficient(grid, coef, lattice=lattice, eps=eps)
    return np.einsum("ers,es->er", ghat, bdu)


def _flux_matrix_constant(cell: CellSolution) -> bool:
    dev = np.abs(cell.g_tilde - cell.g_eff).max()
    return dev <= 1e-9 * max(np.abs(cell.g_eff).max(), 1e-300)


def flux_approx_smoothed(
    grid: Grid, u0, cell: CellSolution, eps: float, margin=None, smoothed_grad=None
) -> np.ndarray:
    """Flux target built from the smoothed gradient: (E, m).

    The rescaled flux-correction matrix of the cell multiplies the
    element average of the smoothed symbol gradient.  A constant
    flux-correction matrix drops the smoothing: the effective matrix
    times the plain gradient is then the sharper target.
    """
    if _flux_matrix_constant(cell):
        return apply_symbol_midpoint(grid, cell.op, u0) @ cell.g_eff.T
    if smoothed_grad is None:
        smoothed_grad = smoothed_symbol_gradient(grid, u0, cell, eps, margin=margin)
    sw_mid = smoothed_grad[grid.connectivity].mean(axis=1)
    gt = _cell_element_lookup(cell, grid.midpoints(), eps)
    return np.einsum("ers,es->er", gt, sw_mid)


def flux_approx_plain(
    grid: Grid, u0, cell: CellSolution, eps=None, grad_mid=None
) -> np.ndarray:
    """Flux target without smoothing: (E, m).

    When the flux-correction matrix is constant across the cell (true
    whenever the effective matrix equals the harmonic-type bound) the
    effective matrix multiplies the gradient directly and no rescaling
    is involved; otherwise eps is required for the periodic lookup.
    """
    if grad_mid is None:
        grad_mid = apply_symbol_midpoint(grid, cell.op, u0)
    if _flux_matrix_constant(cell):
        return grad_mid @ cell.g_eff.T
    if eps is None:
        raise ValueError("oscillating flux-correction matrix needs eps")
    gt = _cell_element_lookup(cell, grid.midpoints(), eps)
    return np.einsum("ers,es->er", gt, grad_mid)
