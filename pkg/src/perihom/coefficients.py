"""Periodic coefficient matrices g and the built-in test library.

A coefficient is a Hermitian positive definite m x m matrix field, periodic
with respect to the lattice.  It is always evaluated in cell-fractional
coordinates t in [0,1)^d, which makes the periodicity explicit and lets the
rescaled field g(x / eps) reuse the same sampler.  Discontinuous media
(laminate, checkerboard) are supported because all downstream quadrature
samples coefficients once per element at the element midpoint.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "PeriodicCoefficient",
    "InvalidCoefficientError",
    "constant_coefficient",
    "trig_coefficient",
    "laminate_coefficient",
    "checkerboard_coefficient",
    "diag_cross_coefficient",
    "grid_sample_coefficient",
]


class InvalidCoefficientError(ValueError):
    """Raised for non-Hermitian or indefinite coefficient samples."""


@dataclass(frozen=True)
class PeriodicCoefficient:
    """Matrix coefficient sampled in cell-fractional coordinates.

    Attributes
    ----------
    size : int
        Matrix dimension m (must match the symbol's row count).
    sampler : callable
        Maps an (k, d) array of fractional points to (k, m, m) matrices.
    name : str
        Library tag for reports.
    """

    size: int
    sampler: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"

    def sample_fractional(self, t: np.ndarray, validate: bool = False) -> np.ndarray:
        """Evaluate at fractional points t (k, d), wrapped mod 1.

        With validate=True the samples are checked for symmetry (tolerance
        1e-14 relative) and positive definiteness.
        """
        t = np.mod(np.asarray(t, dtype=float), 1.0)
        vals = np.asarray(self.sampler(t), dtype=float)
        k = t.shape[0]
        if vals.shape != (k, self.size, self.size):
            raise InvalidCoefficientError(
                f"sampler returned shape {vals.shape}, expected {(k, self.size, self.size)}"
            )
        if validate:
            scale = float(np.abs(vals).max()) or 1.0
            asym = float(np.abs(vals - np.transpose(vals, (0, 2, 1))).max())
            if asym > 1e-14 * scale:
                raise InvalidCoefficientError(f"coefficient not symmetric (deviation {asym:.2e})")
            probe = vals if k <= 256 else vals[:: max(1, k // 256)]
            eigs = np.linalg.eigvalsh(probe)
            if float(eigs.min()) <= 0.0:
                raise InvalidCoefficientError(
                    f"coefficient not positive definite (min eigenvalue {eigs.min():.3e})"
                )
        return 0.5 * (vals + np.transpose(vals, (0, 2, 1)))

    def bounds(self, resolution: int = 64, d: int = None) -> tuple:
        """Estimated essential eigenvalue bounds (c, c_tilde) from a grid scan."""
        if d is None:
            d = _guess_dim(self)
        axes = [np.arange(resolution) / resolution + 0.5 / resolution] * d
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        eigs = np.linalg.eigvalsh(self.sample_fractional(pts))
        return float(eigs.min()), float(eigs.max())


def _guess_dim(coef: PeriodicCoefficient) -> int:
    for d in (1, 2, 3):
        try:
            coef.sample_fractional(np.zeros((1, d)))
            return d
        except Exception:
            continue
    raise InvalidCoefficientError("could not infer coefficient dimension")


def _isotropic(size: int, scalar_fn, name: str) -> PeriodicCoefficient:
    eye = np.eye(size)

    def sampler(t):
        s = np.asarray(scalar_fn(t), dtype=float)
        return s[:, None, None] * eye[None, :, :]

    return PeriodicCoefficient(size=size, sampler=sampler, name=name)


def constant_coefficient(value, size: int = None) -> PeriodicCoefficient:
    """Constant matrix (or scalar times identity)."""
    value = np.asarray(value, dtype=float)
    if value.ndim == 0:
        if size is None:
            raise ValueError("scalar constant needs an explicit matrix size")
        mat = float(value) * np.eye(size)
    else:
        mat = 0.5 * (value + value.T)
        size = mat.shape[0]

    def sampler(t):
        return np.broadcast_to(mat, (t.shape[0], size, size)).copy()

    return PeriodicCoefficient(size=size, sampler=sampler, name="constant")


def trig_coefficient(size: int, offset: float = 2.0, amplitude: float = 1.0, axis: int = 0) -> PeriodicCoefficient:
    """Smooth scalar profile offset + amplitude*cos(2 pi t_axis) times identity."""
    if offset - abs(amplitude) <= 0.0:
        raise InvalidCoefficientError("trig coefficient must stay positive")

    def scalar(t):
        return offset + amplitude * np.cos(2.0 * np.pi * t[:, axis])

    return _isotropic(size, scalar, "trig")


def laminate_coefficient(size: int, values=(1.0, 4.0), axis: int = 0, split: float = 0.5) -> PeriodicCoefficient:
    """Two-phase layers: values[0] for t_axis < split, values[1] otherwise."""
    lo, hi = float(values[0]), float(values[1])
    if min(lo, hi) <= 0.0:
        raise InvalidCoefficientError("laminate phases must be positive")

    def scalar(t):
        return np.where(t[:, axis] < split, lo, hi)

    return _isotropic(size, scalar, "laminate")


def checkerboard_coefficient(size: int, values=(1.0, 4.0)) -> PeriodicCoefficient:
    """2x2 checkerboard on the unit cell: phase from parity of the half-cell index."""
    lo, hi = float(values[0]), float(values[1])
    if min(lo, hi) <= 0.0:
        raise InvalidCoefficientError("checkerboard phases must be positive")

    def scalar(t):
        cells = np.floor(2.0 * t).astype(int)
        parity = cells.sum(axis=1) % 2
        return np.where(parity == 0, lo, hi)

    return _isotropic(size, scalar, "checkerboard")


def diag_cross_coefficient(offset: float = 2.0, amplitude: float = 1.0) -> PeriodicCoefficient:
    """diag(a(t_2), b(t_1)) with trig profiles; both columns are divergence
    free, so the cell corrector vanishes and the effective matrix equals the
    plain mean."""
    if offset - abs(amplitude) <= 0.0:
        raise InvalidCoefficientError("profiles must stay positive")

    def sampler(t):
        k = t.shape[0]
        out = np.zeros((k, 2, 2))
        out[:, 0, 0] = offset + amplitude * np.cos(2.0 * np.pi * t[:, 1])
        out[:, 1, 1] = offset + amplitude * np.cos(2.0 * np.pi * t[:, 0])
        return out

    return PeriodicCoefficient(size=2, sampler=sampler, name="diag_cross")


def grid_sample_coefficient(values, size: int = None) -> PeriodicCoefficient:
    """Piecewise-constant coefficient from explicit per-cell samples.

    `values` is a nested array of shape (N_1, ..., N_d) of scalars or
    (N_1, ..., N_d, m, m) of matrices; entry [i...] covers the fractional
    box prod_j [i_j/N_j, (i_j+1)/N_j) with nearest-cell periodic lookup.
    """
    arr = np.asarray(values, dtype=float)
    if arr.ndim >= 2 and arr.shape[-1] == arr.shape[-2] and size != 1 and arr.ndim > 2:
        m = arr.shape[-1]
        grid_shape = arr.shape[:-2]
    else:
        m = 1 if size is None else size
        grid_shape = arr.shape
        if m == 1:
            arr = arr[..., None, None]
        else:
            arr = arr[..., None, None] * np.eye(m)
    if np.any(np.linalg.eigvalsh(arr.reshape(-1, m, m)).min(axis=1) <= 0):
        raise InvalidCoefficientError("grid samples must be positive definite")
    d = len(grid_shape)

    def sampler(t):
        idx = tuple(
            np.minimum((t[:, j] * grid_shape[j]).astype(int), grid_shape[j] - 1) for j in range(d)
        )
        return arr[idx]

    return PeriodicCoefficient(size=m, sampler=sampler, name="grid")
