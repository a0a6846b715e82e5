"""Tensor-product Q1 grids on cells, rectangles, and tori.

One grid class covers all three uses.  A grid is the image of the unit box
[0,1]^d under an affine map `origin + axes_matrix @ t`, split into an
N_1 x ... x N_d array of elements.  The periodicity cell of a lattice uses
the lattice basis as axes_matrix (so skew cells are ordinary boxes in
fractional coordinates); rectangles and torus proxies use a diagonal map.
Periodic grids identify opposite faces, so they have exactly N_j nodes per
axis instead of N_j + 1.

Quadrature is 2-point Gauss per axis, which integrates products of Q1
gradients exactly; norms computed here are therefore the exact L2 / H1
norms of the piecewise multilinear interpolant.  Coefficients are sampled
once per element at the midpoint, so discontinuous media keep sharp phase
boundaries as long as interfaces align with element faces.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .lattice_symbol import Lattice, SymbolOperator

__all__ = [
    "Grid",
    "cell_grid",
    "domain_grid",
    "SymbolBlocks",
    "symbol_blocks",
    "sample_coefficient",
    "l2_norm",
    "h1_seminorm",
    "h1_norm",
    "element_l2_norm",
    "element_mean",
    "nodal_gradient",
    "apply_symbol_nodal",
    "apply_symbol_midpoint",
    "interpolate_nodes",
    "write_field_csv",
    "read_field_csv",
]


def _reference_tables(d: int):
    """Q1 shape values and gradients at the 2^d Gauss points of [0,1]^d.

    Returns (S, w_ref, Nval, dN, corners) with quadrature points S (Q, d),
    the common reference weight w_ref = 2^-d, shape values Nval (Q, C),
    gradients dN (Q, C, d) and corner offsets (C, d).  Corner and point
    ordering both follow np.ndindex (last axis fastest).
    """
    corners = np.array(list(np.ndindex(*(2,) * d)), dtype=int)
    lo = 0.5 - 0.5 / np.sqrt(3.0)
    pts = np.array([lo, 1.0 - lo])
    S = pts[corners]
    C = corners.shape[0]
    Q = S.shape[0]
    Nval = np.ones((Q, C))
    dN = np.ones((Q, C, d))
    for c in range(C):
        for j in range(d):
            leg = S[:, j] if corners[c, j] else 1.0 - S[:, j]
            Nval[:, c] *= leg
            for l in range(d):
                if l == j:
                    dN[:, c, j] *= 1.0 if corners[c, j] else -1.0
                else:
                    legl = S[:, l] if corners[c, l] else 1.0 - S[:, l]
                    dN[:, c, j] *= legl
    return S, 0.5 ** d, Nval, dN, corners


@dataclass(eq=False)
class Grid:
    """Uniform Q1 grid over an affine box, optionally periodic.

    Attributes
    ----------
    shape : tuple of int
        Elements per axis.
    periodic : bool
        Identify opposite faces (torus / periodicity cell).
    axes_matrix : ndarray (d, d)
        Columns are the box edge vectors; physical = origin + axes @ t.
    origin : ndarray (d,)
    lattice : Lattice or None
        Set for periodicity-cell grids; carries the dual data.
    """

    shape: tuple
    periodic: bool
    axes_matrix: np.ndarray
    origin: np.ndarray
    lattice: Lattice = None

    def __post_init__(self):
        self.shape = tuple(int(n) for n in self.shape)
        if any(n < 1 for n in self.shape):
            raise ValueError("grid needs at least one element per axis")
        self.axes_matrix = np.asarray(self.axes_matrix, dtype=float)
        self.origin = np.asarray(self.origin, dtype=float)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def node_shape(self) -> tuple:
        if self.periodic:
            return self.shape
        return tuple(n + 1 for n in self.shape)

    @property
    def n_elements(self) -> int:
        return int(np.prod(self.shape))

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.node_shape))

    @property
    def volume(self) -> float:
        return float(abs(np.linalg.det(self.axes_matrix)))

    @property
    def element_volume(self) -> float:
        return self.volume / self.n_elements

    @cached_property
    def grad_matrix(self) -> np.ndarray:
        # physical gradient = grad_matrix @ reference-element gradient
        return np.linalg.inv(self.axes_matrix).T * np.asarray(self.shape)[None, :]

    @cached_property
    def reference(self):
        return _reference_tables(self.dim)

    @cached_property
    def connectivity(self) -> np.ndarray:
        """(n_elements, 2^d) node indices per element, C-ordered."""
        corners = self.reference[4]
        multi = np.indices(self.shape).reshape(self.dim, -1)
        conn = np.empty((self.n_elements, corners.shape[0]), dtype=np.int64)
        node_shape = self.node_shape
        for c, off in enumerate(corners):
            pos = multi + off[:, None]
            if self.periodic:
                pos = pos % np.asarray(self.shape)[:, None]
            conn[:, c] = np.ravel_multi_index(pos, node_shape)
        return conn

    @cached_property
    def mass_ref(self) -> np.ndarray:
        """Consistent-mass reference block: int N_a N_b over the unit box."""
        _, w, Nval, _, _ = self.reference
        return w * (Nval.T @ Nval)

    @cached_property
    def gradgrad_ref(self) -> np.ndarray:
        """Reference block for the full-gradient seminorm on this grid."""
        Gd = self.grad_table
        _, w, _, _, _ = self.reference
        return w * np.einsum("qal,qbl->ab", Gd, Gd)

    @cached_property
    def grad_table(self) -> np.ndarray:
        """Physical shape gradients at Gauss points: (Q, C, d)."""
        _, _, _, dN, _ = self.reference
        return np.einsum("lj,qcj->qcl", self.grad_matrix, dN)

    @cached_property
    def grad_mid(self) -> np.ndarray:
        """Physical shape gradients at the element midpoint: (C, d).

        For Q1 each gradient component is multilinear, so the midpoint
        value equals the element average.
        """
        corners = self.reference[4]
        d = self.dim
        signs = np.where(corners == 1, 1.0, -1.0)
        dN_mid = signs * 0.5 ** (d - 1)
        return dN_mid @ self.grad_matrix.T

    def fractional_midpoints(self) -> np.ndarray:
        """(E, d) element midpoints in box-fractional coordinates."""
        multi = np.indices(self.shape).reshape(self.dim, -1).T.astype(float)
        return (multi + 0.5) / np.asarray(self.shape, dtype=float)

    def fractional_nodes(self) -> np.ndarray:
        multi = np.indices(self.node_shape).reshape(self.dim, -1).T.astype(float)
        return multi / np.asarray(self.shape, dtype=float)

    def midpoints(self) -> np.ndarray:
        """(E, d) element midpoints in physical coordinates."""
        return self.origin + self.fractional_midpoints() @ self.axes_matrix.T

    def nodes(self) -> np.ndarray:
        return self.origin + self.fractional_nodes() @ self.axes_matrix.T

    def node_spacing(self) -> np.ndarray:
        """Physical extent of one element per axis (diagonal grids)."""
        return np.linalg.norm(self.axes_matrix, axis=0) / np.asarray(self.shape)


def cell_grid(lattice: Lattice, resolution) -> Grid:
    """Periodic grid over one periodicity cell of the lattice."""
    shape = _expand_resolution(resolution, lattice.dim)
    return Grid(
        shape=shape,
        periodic=True,
        axes_matrix=lattice.basis.copy(),
        origin=np.zeros(lattice.dim),
        lattice=lattice,
    )


def domain_grid(lengths, resolution, periodic: bool = False) -> Grid:
    """Axis-aligned rectangle [0, L_1] x ... x [0, L_d], torus if periodic."""
    lengths = np.atleast_1d(np.asarray(lengths, dtype=float))
    if (lengths <= 0).any():
        raise ValueError("side lengths must be positive")
    d = lengths.size
    shape = _expand_resolution(resolution, d)
    return Grid(
        shape=shape,
        periodic=periodic,
        axes_matrix=np.diag(lengths),
        origin=np.zeros(d),
    )


def _expand_resolution(resolution, d: int) -> tuple:
    if np.isscalar(resolution):
        return (int(resolution),) * d
    res = tuple(int(r) for r in resolution)
    if len(res) != d:
        raise ValueError(f"resolution has {len(res)} axes, grid has {d}")
    return res


@dataclass(eq=False)
class SymbolBlocks:
    """Per-grid evaluation tables for a first-order symbol operator.

    quad : (Q, m, C, n)  symbol applied to shape gradients at Gauss points
    mid : (m, C, n)      same at the element midpoint (= element average)
    pair : (m, m, C*n, C*n)  quadrature-summed outer products, so a full
        element stiffness is vol_e * einsum('rs,rsAB->AB', ghat_e, pair)
    """

    op: SymbolOperator
    quad: np.ndarray
    mid: np.ndarray
    pair: np.ndarray


def symbol_blocks(grid: Grid, op: SymbolOperator) -> SymbolBlocks:
    if op.dim != grid.dim:
        raise ValueError("symbol and grid dimensions differ")
    Gd = grid.grad_table
    _, w, _, _, _ = grid.reference
    quad = np.einsum("lri,qal->qrai", op.matrices, Gd)
    mid = np.einsum("lri,al->rai", op.matrices, grid.grad_mid)
    Q, m, C, n = quad.shape
    flat = quad.reshape(Q, m, C * n)
    pair = w * np.einsum("qrA,qsB->rsAB", flat, flat)
    return SymbolBlocks(op=op, quad=quad, mid=mid, pair=pair)


def sample_coefficient(grid: Grid, coef, lattice: Lattice = None, eps: float = None,
                       validate: bool = False) -> np.ndarray:
    """Coefficient samples at element midpoints: (E, m, m).

    Without eps the grid box is taken to span exactly one period (the cell
    grid case).  With eps the midpoints x are mapped to cell-fractional
    coordinates of x / eps, which evaluates the eps-rescaled field.
    """
    if eps is None:
        t = grid.fractional_midpoints()
    else:
        if lattice is None:
            lattice = grid.lattice
        if lattice is None:
            raise ValueError("rescaled sampling needs a lattice")
        t = lattice.to_fractional(grid.midpoints() / float(eps))
    return coef.sample_fractional(t, validate=validate)


def _gather(grid: Grid, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape[0] != grid.n_nodes:
        raise ValueError(f"expected {grid.n_nodes} nodal values, got {values.shape[0]}")
    return values[grid.connectivity]


def _quadratic(grid: Grid, ref_block: np.ndarray, values, weights=None) -> float:
    U = _gather(grid, values)
    U = U.reshape(U.shape[0], U.shape[1], -1)
    if weights is None:
        acc = np.einsum("ab,eak,ebk->", ref_block, U, U)
    else:
        w = np.asarray(weights, dtype=float)
        acc = np.einsum("e,ab,eak,ebk->", w, ref_block, U, U)
    return float(acc) * grid.element_volume


def l2_norm(grid: Grid, values, weights=None) -> float:
    """Exact L2 norm of the Q1 interpolant of nodal values.

    weights, if given, is a per-element factor (e.g. a 0/1 mask selecting
    a subdomain).
    """
    return float(np.sqrt(max(_quadratic(grid, grid.mass_ref, values, weights), 0.0)))


def h1_seminorm(grid: Grid, values, weights=None) -> float:
    """Exact L2 norm of the full gradient of the Q1 interpolant."""
    return float(np.sqrt(max(_quadratic(grid, grid.gradgrad_ref, values, weights), 0.0)))


def h1_norm(grid: Grid, values, weights=None) -> float:
    a = _quadratic(grid, grid.mass_ref, values, weights)
    b = _quadratic(grid, grid.gradgrad_ref, values, weights)
    return float(np.sqrt(max(a + b, 0.0)))


def element_l2_norm(grid: Grid, values, weights=None) -> float:
    """L2 norm of a piecewise-constant (per-element) field."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] != grid.n_elements:
        raise ValueError(f"expected {grid.n_elements} element values, got {values.shape[0]}")
    sq = (values.reshape(grid.n_elements, -1) ** 2).sum(axis=1)
    if weights is not None:
        sq = sq * np.asarray(weights, dtype=float)
    return float(np.sqrt(sq.sum() * grid.element_volume))


def element_mean(grid: Grid, values) -> np.ndarray:
    """Volume average of a per-element field over the whole box."""
    values = np.asarray(values, dtype=float)
    return values.mean(axis=0)


def nodal_gradient(grid: Grid, values) -> np.ndarray:
    """Second-order nodal gradient of a nodal field: (P, d, ...).

    Periodic grids use centered differences with wraparound; otherwise
    one-sided second-order stencils at the boundary.
    """
    values = np.asarray(values, dtype=float)
    comp_shape = values.shape[1:]
    arr = values.reshape(grid.node_shape + comp_shape)
    d = grid.dim
    grads_t = []
    for j in range(d):
        dt = 1.0 / grid.shape[j]
        if grid.periodic:
            gj = (np.roll(arr, -1, axis=j) - np.roll(arr, 1, axis=j)) / (2.0 * dt)
        else:
            gj = np.gradient(arr, dt, axis=j, edge_order=2)
        grads_t.append(gj)
    gt = np.stack(grads_t, axis=d)  # (*node_shape, d, *comp)
    inv_t = np.linalg.inv(grid.axes_matrix).T
    # physical gradient = inv_t @ fractional gradient, contracted over axis d
    gx = np.tensordot(gt, inv_t.T, axes=([d], [0]))
    gx = np.moveaxis(gx, -1, d)
    return gx.reshape((grid.n_nodes, d) + comp_shape)


def apply_symbol_nodal(grid: Grid, op: SymbolOperator, values) -> np.ndarray:
    """Symbol applied to a nodal n-vector field, at nodes: (P, m)."""
    grad = nodal_gradient(grid, values)  # (P, d, n)
    return np.einsum("lri,pli->pr", op.matrices, grad)


def apply_symbol_midpoint(grid: Grid, op: SymbolOperator, values, blocks: SymbolBlocks = None) -> np.ndarray:
    """Symbol applied to a nodal field, per element midpoint: (E, m).

    The midpoint value equals the element average for Q1 fields.
    """
    if blocks is None:
        blocks = symbol_blocks(grid, op)
    U = _gather(grid, values)
    return np.einsum("rai,eai->er", blocks.mid, U)


def interpolate_nodes(grid: Grid, values, t_points) -> np.ndarray:
    """Multilinear interpolation of a nodal field at box-fractional points.

    Periodic grids wrap; others clamp to the box.  Returns (K, ...) with
    the field's component shape.
    """
    values = np.asarray(values, dtype=float)
    comp_shape = values.shape[1:]
    arr = values.reshape(grid.node_shape + comp_shape)
    t = np.asarray(t_points, dtype=float)
    if t.ndim == 1:
        t = t[None, :]
    d = grid.dim
    shape = np.asarray(grid.shape)
    if grid.periodic:
        t = np.mod(t, 1.0)
    s = t * shape
    i0 = np.floor(s).astype(np.int64)
    i0 = np.minimum(i0, shape - 1)
    i0 = np.maximum(i0, 0)
    w = s - i0
    out = np.zeros((t.shape[0],) + comp_shape)
    for off in np.ndindex(*(2,) * d):
        idx = []
        weight = np.ones(t.shape[0])
        for j in range(d):
            ij = i0[:, j] + off[j]
            if grid.periodic:
                ij = ij % shape[j]
            else:
                ij = np.minimum(ij, shape[j])
            idx.append(ij)
            weight = weight * (w[:, j] if off[j] else 1.0 - w[:, j])
        vals = arr[tuple(idx)]
        out += weight.reshape((-1,) + (1,) * len(comp_shape)) * vals
    return out


def write_field_csv(file, grid: Grid, values, kind: str = "node") -> None:
    """Write a field as CSV with columns x_1..x_d, comp_1..comp_k."""
    values = np.asarray(values, dtype=float)
    if kind == "node":
        coords = grid.nodes()
        expected = grid.n_nodes
    elif kind == "element":
        coords = grid.midpoints()
        expected = grid.n_elements
    else:
        raise ValueError("kind must be 'node' or 'element'")
    flat = values.reshape(values.shape[0], -1)
    if flat.shape[0] != expected:
        raise ValueError(f"field has {flat.shape[0]} rows, grid expects {expected} {kind}s")
    d = grid.dim
    header = ",".join([f"x_{j + 1}" for j in range(d)] + [f"comp_{i + 1}" for i in range(flat.shape[1])])
    table = np.hstack([coords, flat])
    opened = isinstance(file, (str, bytes)) or hasattr(file, "__fspath__")
    handle = open(file, "w") if opened else file
    try:
        np.savetxt(handle, table, delimiter=",", header=header, comments="", fmt="%.17g")
    finally:
        if opened:
            handle.close()


def read_field_csv(file):
    """Read a field CSV back: returns (coords (K, d), values (K, k))."""
    opened = isinstance(file, (str, bytes)) or hasattr(file, "__fspath__")
    handle = open(file, "r") if opened else file
    try:
        header = handle.readline().strip()
        cols = header.split(",")
        d = sum(1 for c in cols if c.startswith("x_"))
        data = np.loadtxt(handle, delimiter=",", ndmin=2)
    finally:
        if opened:
            handle.close()
    return data[:, :d], data[:, d:]
