"""Shrinking-period sweeps: solve both problems, measure errors, fit rates."""

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .approximation import (
    corrector_plain,
    corrector_smoothed,
    flux,
    flux_approx_smoothed,
    smoothed_symbol_gradient,
)
from .cell_problem import solve_cell_problem
from .coefficients import PeriodicCoefficient
from .discretization import (
    cell_grid,
    domain_grid,
    element_l2_norm,
    h1_norm,
    l2_norm,
)
from .lattice_symbol import EllipticityConstants, Lattice, SymbolOperator
from .solvers import ProblemSpec, SolverFailure, solve_lambda0, solve_problem

RATE_BAND = 0.2

RATE_TARGETS = {
    "torus": {
        "err_l2": 1.0,
        "err_h1_corr": 1.0,
        "err_h1_corr_plain": 1.0,
        "err_flux": 1.0,
    },
    "square": {
        "err_l2": 1.0,
        "err_h1_corr": 0.5,
        "err_h1_corr_plain": 0.5,
        "err_flux": 0.5,
        "err_h1_interior": 1.0,
    },
}


class StudyError(RuntimeError):
    """A sweep entry failed; carries the report for the entries that ran."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    residual: float

    def to_dict(self):
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "residual": self.residual,
        }


def rate_fit(eps_values, errors) -> RateFit:
    """Least-squares line through (log2 eps, log2 err).

    Vanishing errors cannot be fitted on the log scale; they mean the
    decay outran measurement, reported as an infinite slope.
    """
    eps_values = np.asarray(eps_values, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if eps_values.size < 3:
        raise ValueError("rate fit needs at least 3 sweep points")
    if (errors < 0).any():
        raise ValueError("error metrics cannot be negative")
    x = np.log2(eps_values)
    if np.ptp(x) <= 0:
        raise ValueError("sweep values must not all coincide")
    if (errors < 1e-300).any():
        return RateFit(slope=math.inf, intercept=-math.inf, residual=0.0)
    y = np.log2(errors)
    coeffs, ss, *_ = np.polyfit(x, y, 1, full=True)
    residual = float(np.sqrt(ss[0] / x.size)) if ss.size else 0.0
    return RateFit(slope=float(coeffs[0]), intercept=float(coeffs[1]), residual=residual)


def interior_element_mask(grid, delta: float) -> np.ndarray:
    """0/1 element weights for the concentric box at wall distance delta."""
    lengths = np.linalg.norm(grid.axes_matrix, axis=0)
    if delta < 0 or delta >= lengths.min() / 2:
        raise ValueError(f"delta {delta} must lie in [0, {lengths.min() / 2})")
    pos = grid.fractional_midpoints() * lengths
    inside = np.all((pos >= delta - 1e-12) & (pos <= lengths - delta + 1e-12), axis=1)
    if not inside.any():
        raise ValueError("no elements at that wall distance")
    return inside.astype(float)


def interior_metrics(grid, values, delta: float) -> float:
    """Sobolev norm restricted to the concentric sub-box at distance delta."""
    if delta == 0:
        return h1_norm(grid, values)
    return h1_norm(grid, values, weights=interior_element_mask(grid, delta))


@dataclass
class StudyPlan:
    """Everything one sweep needs: problem family, sweep values, metrics."""

    kind: str
    coefficient: PeriodicCoefficient
    op: SymbolOperator
    lattice: Lattice
    lam: float = 1.0
    eps_list: tuple = (1 / 8, 1 / 16, 1 / 32, 1 / 64)
    cell_resolution: int = 16
    lengths: tuple = (1.0, 1.0)
    interior_delta: float = None
    interior_delta_power: float = None
    tol: float = 1e-10
    cell_tol: float = 1e-10
    constants: EllipticityConstants = None
    study_id: str = ""
    load: object = None  # callable nodes (P, d) -> (P, n); default below

    def __post_init__(self):
        if self.kind not in ("square", "torus"):
            raise ValueError(f"unknown study kind {self.kind!r}")
        eps = tuple(float(e) for e in self.eps_list)
        if len(eps) == 0:
            raise ValueError("empty sweep")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("sweep values must be strictly decreasing")
        if any(e <= 0 for e in eps):
            raise ValueError("sweep values must be positive")
        self.eps_list = eps
        self.lengths = tuple(float(v) for v in self.lengths)
        if self.kind == "torus" and self.lam <= 0:
            raise ValueError("torus studies need lam > 0")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.interior_delta is not None and self.kind != "square":
            raise ValueError("interior metrics apply to bounded boxes only")


@dataclass
class ConvergenceReport:
    study_id: str
    kind: str
    lam: float
    eps: tuple
    metrics: dict
    slopes: dict
    targets: dict
    passed: dict
    details: list
    cell_summary: dict
    band: float = RATE_BAND
    failure: str = None

    def __post_init__(self):
        eps = tuple(self.eps)
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("report sweep must be strictly decreasing")
        for name, vals in self.metrics.items():
            if any(v < 0 for v in vals):
                raise ValueError(f"negative metric {name}")

    @property
    def all_passed(self) -> bool:
        return self.failure is None and all(self.passed.values())

    def to_dict(self) -> dict:
        return {
            "study_id": self.study_id,
            "kind": self.kind,
            "lam": self.lam,
            "eps": list(self.eps),
            "metrics": {k: list(v) for k, v in self.metrics.items()},
            "slopes": {k: v.to_dict() for k, v in self.slopes.items()},
            "targets": dict(self.targets),
            "band": self.band,
            "passed": dict(self.passed),
            "all_passed": self.all_passed,
            "details": list(self.details),
            "cell_summary": dict(self.cell_summary),
            "failure": self.failure,
        }


def default_load(grid, n: int) -> np.ndarray:
    """Product-of-cosines load; wraps smoothly on a torus, zero-flux on a box."""
    t = grid.fractional_nodes()
    freq = 2.0 * np.pi if grid.periodic else np.pi
    profile = np.cos(freq * t).prod(axis=1)
    return np.repeat(profile[:, None], n, axis=1)


def worker_count(n_jobs: int) -> int:
    env = os.environ.get("PERIHOM_THREADS", "").strip()
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise ValueError("PERIHOM_THREADS must be an integer") from None
        if cap < 1:
            raise ValueError("PERIHOM_THREADS must be at least 1")
    else:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_jobs))


def _sweep_grid(plan: StudyPlan, eps: float):
    shape = []
    for length in plan.lengths:
        exact = length * plan.cell_resolution / eps
        n = round(exact)
        if abs(exact - n) > 1e-9 or n < 2:
            raise ValueError(
                f"eps {eps} does not tile side {length} at {plan.cell_resolution} nodes per period"
            )
        shape.append(int(n))
    return domain_grid(plan.lengths, shape, periodic=plan.kind == "torus")


def _run_entry(plan: StudyPlan, cell, eps: float) -> dict:
    tic = time.perf_counter()
    grid = _sweep_grid(plan, eps)
    n = plan.op.cols
    rhs = plan.load(grid, n) if callable(plan.load) else default_load(grid, n)
    base = dict(grid=grid, op=plan.op, rhs=rhs, lam=plan.lam, constants=plan.constants)
    eff_kind = "periodic_eff" if grid.periodic else "neumann_eff"
    osc_kind = "periodic_eps" if grid.periodic else "neumann_eps"
    spec_eff = ProblemSpec(kind=eff_kind, effective=cell.g_eff, **base)
    spec_osc = ProblemSpec(
        kind=osc_kind,
        coefficient=plan.coefficient,
        lattice=plan.lattice,
        eps=eps,
        **base,
    )
    if plan.lam > 0:
        u0, stats_eff, _ = solve_problem(spec_eff, tol=plan.tol)
        # the homogenized solution is an excellent first guess
        u_eps, stats_osc, asm = solve_problem(spec_osc, tol=plan.tol, x0=u0)
    else:
        u0, stats_eff, _, kernel = solve_lambda0(spec_eff, tol=plan.tol)
        u_eps, stats_osc, asm, _ = solve_lambda0(
            spec_osc, kernel=kernel, tol=plan.tol, x0=u0
        )

    sw = smoothed_symbol_gradient(grid, u0, cell, eps)
    v = corrector_smoothed(grid, u0, cell, eps, smoothed_grad=sw)
    v_plain = corrector_plain(grid, u0, cell, eps)
    p_eps = flux(grid, plan.op, u_eps, asm.ghat)
    p_target = flux_approx_smoothed(grid, u0, cell, eps, smoothed_grad=sw)

    metrics = {
        "err_l2": l2_norm(grid, u_eps - u0),
        "err_h1_corr": h1_norm(grid, u_eps - v),
        "err_h1_corr_plain": h1_norm(grid, u_eps - v_plain),
        "err_flux": element_l2_norm(grid, p_eps - p_target),
    }
    detail = {
        "eps": eps,
        "n_dof": grid.n_nodes * n,
        "iterations_effective": stats_eff.iterations,
        "iterations_oscillating": stats_osc.iterations,
    }
    if plan.kind == "square" and (
        plan.interior_delta is not None or plan.interior_delta_power is not None
    ):
        delta = (
            eps**plan.interior_delta_power
            if plan.interior_delta_power is not None
            else plan.interior_delta
        )
        metrics["err_h1_interior"] = interior_metrics(grid, u_eps - v, delta)
        detail["interior_delta"] = delta
    detail["seconds"] = time.perf_counter() - tic
    return {"metrics": metrics, "detail": detail}


def _assemble_report(plan: StudyPlan, cell, entries, failure=None) -> ConvergenceReport:
    eps_done = plan.eps_list[: len(entries)]
    names = list(entries[0]["metrics"].keys()) if entries else []
    metrics = {
        name: [float(e["metrics"][name]) for e in entries] for name in names
    }
    targets = {
        k: t for k, t in RATE_TARGETS[plan.kind].items() if k in metrics
    }
    slopes = {}
    passed = {}
    if len(eps_done) >= 3:
        for name, target in targets.items():
            fit = rate_fit(eps_done, metrics[name])
            slopes[name] = fit
            passed[name] = fit.slope == math.inf or (
                target - RATE_BAND <= fit.slope <= target + RATE_BAND
            )
    summary = {
        "g_eff": cell.g_eff.tolist(),
        "corrector_sup": cell.corrector_sup,
        "corrector_l2": cell.corrector_l2,
        "dcorrector_l2": cell.dcorrector_l2,
        "is_corrector_free": cell.is_corrector_free,
        "cell_resolution": plan.cell_resolution,
    }
    return ConvergenceReport(
        study_id=plan.study_id,
        kind=plan.kind,
        lam=plan.lam,
        eps=eps_done,
        metrics=metrics,
        slopes=slopes,
        targets=targets,
        passed=passed,
        details=[e["detail"] for e in entries],
        cell_summary=summary,
        failure=failure,
    )


def run_study(plan: StudyPlan) -> ConvergenceReport:
    """Run the sweep and fit rates; raises StudyError with a partial report
    if any entry's solver fails."""
    cell = solve_cell_problem(
        plan.coefficient,
        plan.op,
        cell_grid(plan.lattice, plan.cell_resolution),
        tol=plan.cell_tol,
    )
    workers = worker_count(len(plan.eps_list))
    entries = []
    if workers == 1:
        for eps in plan.eps_list:
            try:
                entries.append(_run_entry(plan, cell, eps))
            except SolverFailure as exc:
                report = _assemble_report(
                    plan, cell, entries, failure=f"eps={eps}: {exc}"
                )
                raise StudyError(str(exc), report) from exc
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_run_entry, plan, cell, eps) for eps in plan.eps_list
            ]
            for eps, fut in zip(plan.eps_list, futures):
                try:
                    entries.append(fut.result())
                except SolverFailure as exc:
                    report = _assemble_report(
                        plan, cell, entries, failure=f"eps={eps}: {exc}"
                    )
                    raise StudyError(str(exc), report) from exc
    return _assemble_report(plan, cell, entries)
