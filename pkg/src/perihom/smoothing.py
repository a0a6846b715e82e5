"""Steklov smoothing: averaging over one eps-scaled, centered lattice cell.

The average (S u)(x) = |cell|^-1 integral of u(x - eps z) over the centered
cell is discretized by a composite midpoint rule in cell-fractional
coordinates (P points per axis, P = max(4, ceil(eps/h)) by default) with
multilinear interpolation of the nodal field.  Every quadrature sample is
a uniform shift of the whole grid, so it factors into d one-dimensional
shift-lerps; when the shift matrix is diagonal the full average itself
factors into d one-dimensional passes (d*P shifts instead of P^d).

On periodic grids shifts wrap and the operator is an exact convex
combination of grid translations, hence a contraction in the consistent
mass norm.  On bounded grids samples near the boundary would read outside
the box; the caller must either smooth an extended field and restrict, or
pass `region` so only nodes whose full stencil is supported are required
to be exact (values outside the region are computed with clamped reads and
must be discarded).
"""

import math

import numpy as np

from .discretization import Grid
from .lattice_symbol import Lattice

__all__ = ["steklov_smooth", "smoothing_support_nodes", "OutOfSupportError"]


class OutOfSupportError(ValueError):
    """Smoothing stencil exits the grid inside the requested exact region."""


def _shift_matrix(grid: Grid, lattice: Lattice, eps: float) -> np.ndarray:
    """Quadrature shift per unit fractional cell coordinate, in node units."""
    frac = np.linalg.inv(grid.axes_matrix) @ (eps * lattice.basis)
    return frac * np.asarray(grid.shape)[:, None]


def smoothing_support_nodes(grid: Grid, lattice: Lattice, eps: float) -> np.ndarray:
    """Per-axis node-count radius the averaging stencil can reach."""
    S = _shift_matrix(grid, lattice, eps)
    extent = 0.5 * np.abs(S).sum(axis=1)
    return np.ceil(extent).astype(int) + 1


def _lerp_axis(arr: np.ndarray, axis: int, shift: float, periodic: bool,
               n_nodes: int) -> np.ndarray:
    """Evaluate the field at every node displaced by -shift along one axis."""
    k = math.floor(shift)
    w = shift - k
    if periodic:
        a = np.roll(arr, k, axis=axis)
        if w == 0.0:
            return a
        b = np.roll(arr, k + 1, axis=axis)
    else:
        idx = np.arange(n_nodes) - k
        a = arr.take(np.clip(idx, 0, n_nodes - 1), axis=axis)
        if w == 0.0:
            return a
        b = arr.take(np.clip(idx - 1, 0, n_nodes - 1), axis=axis)
    return (1.0 - w) * a + w * b


def steklov_smooth(grid: Grid, values: np.ndarray, eps: float, lattice: Lattice,
                   points: int = None, region=None) -> np.ndarray:
    """Smooth a nodal field; returns a nodal field on the same grid.

    region, for bounded grids, is a pair (lo, hi) of per-axis node index
    bounds (inclusive) within which values are guaranteed exact; it
    defaults to all nodes, which raises OutOfSupportError whenever the
    stencil would exit the grid.  Periodic grids ignore region.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    values = np.asarray(values, dtype=float)
    comp_shape = values.shape[1:]
    arr = values.reshape(grid.node_shape + comp_shape)
    d = grid.dim
    if points is None:
        points = max(4, math.ceil(eps / float(grid.node_spacing().min())))
    taus = (np.arange(points) + 0.5) / points - 0.5
    S = _shift_matrix(grid, lattice, eps)

    if not grid.periodic:
        need = smoothing_support_nodes(grid, lattice, eps)
        if region is None:
            lo = np.zeros(d, dtype=int)
            hi = np.asarray(grid.node_shape) - 1
        else:
            lo = np.asarray(region[0], dtype=int)
            hi = np.asarray(region[1], dtype=int)
        nmax = np.asarray(grid.node_shape) - 1
        if (lo - need < 0).any() or (hi + need > nmax).any():
            raise OutOfSupportError(
                "averaging stencil exits the grid inside the exact region; "
                "smooth an extended field or shrink the region"
            )

    off_diagonal = float(np.abs(S - np.diag(np.diag(S))).max())
    if off_diagonal <= 1e-14:
        # tensor-product kernel: one 1D averaging pass per axis
        out = arr
        for j in range(d):
            sj = float(S[j, j])
            if sj == 0.0:
                continue
            acc = np.zeros_like(out)
            for t in taus:
                acc += _lerp_axis(out, j, sj * t, grid.periodic, grid.node_shape[j])
            out = acc / points
        smoothed = out
    else:
        smoothed = np.zeros_like(arr)
        for combo in np.ndindex(*(points,) * d):
            shift = S @ taus[list(combo)]
            term = arr
            for j in range(d):
                if shift[j] != 0.0:
                    term = _lerp_axis(term, j, float(shift[j]), grid.periodic,
                                      grid.node_shape[j])
            smoothed += term
        smoothed /= float(points ** d)
    return smoothed.reshape((grid.n_nodes,) + comp_shape)
