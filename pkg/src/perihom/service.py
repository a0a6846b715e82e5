"""HTTP front end: JSON endpoints around the cell, solve, and study flows.

Run standalone with `uvicorn perihom.service:app`; the command-line client
talks to the same app in process, so both share one code path.
"""

from typing import List, Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from . import __version__
from .cell_problem import solve_cell_problem
from .config import (
    Config,
    ConfigError,
    build_coefficient,
    build_lattice_for,
    build_study_plan,
    build_symbol,
    config_hash,
    validate_config,
)
from .discretization import cell_grid, domain_grid, h1_norm, l2_norm
from .harness import StudyError, default_load, run_study
from .reporting import report_payload, sanitize
from .selftest import run_selftest
from .solvers import ConfigurationError, ProblemSpec, SolverFailure, solve_lambda0, solve_problem


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CellRequest(_Model):
    config: dict = Field(default_factory=dict)
    include_field: bool = False


class CellResponse(_Model):
    config_hash: str
    resolution: int
    g_eff: List[List[float]]
    g_under: List[List[float]]
    g_bar: List[List[float]]
    corrector_l2: float
    corrector_sup: float
    dcorrector_l2: float
    is_corrector_free: bool
    iterations: int
    residual: float
    corrector: Optional[List[List[float]]] = None


class SolveRequest(_Model):
    config: dict = Field(default_factory=dict)
    include_field: bool = False


class SolveResponse(_Model):
    config_hash: str
    kind: str
    lam: float
    eps: Optional[float]
    n_dof: int
    iterations: int
    residual: float
    converged: bool
    u_l2: float
    u_h1: float
    g_eff: Optional[List[List[float]]] = None
    solution: Optional[List[List[float]]] = None


class StudyRequest(_Model):
    config: dict = Field(default_factory=dict)


class StudyResponse(_Model):
    config_hash: str
    report: dict


class SelftestResponse(_Model):
    ok: bool
    checks: List[dict]


def run_cell(cfg: Config):
    """One cell solve from a validated config."""
    op = build_symbol(cfg)
    lattice = build_lattice_for(cfg, op)
    coef = build_coefficient(cfg, op)
    grid = cell_grid(lattice, cfg.cell.resolution)
    try:
        cell = solve_cell_problem(coef, op, grid, tol=cfg.cell.tol)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cell, grid


def run_solve(cfg: Config):
    """One boundary-value solve from a validated config."""
    op = build_symbol(cfg)
    lattice = build_lattice_for(cfg, op)
    prob = cfg.problem
    if len(prob.lengths) != op.dim:
        raise ConfigError(
            f"problem.lengths has {len(prob.lengths)} entries for a "
            f"{op.dim}-dimensional symbol"
        )
    grid = domain_grid(prob.lengths, prob.resolution,
                       periodic=prob.kind.startswith("periodic"))
    rhs = default_load(grid, op.cols)
    g_eff = None
    kwargs = {}
    if prob.kind.endswith("_eps"):
        kwargs.update(coefficient=build_coefficient(cfg, op), lattice=lattice,
                      eps=prob.eps)
    else:
        cell, _ = run_cell(cfg)
        g_eff = cell.g_eff
        kwargs.update(effective=g_eff)
    try:
        spec = ProblemSpec(kind=prob.kind, grid=grid, op=op, rhs=rhs,
                           lam=prob.lam, **kwargs)
        if prob.lam == 0.0:
            u, stats, asm, kernel = solve_lambda0(spec, tol=prob.tol)
        else:
            u, stats, asm = solve_problem(spec, tol=prob.tol)
    except (ConfigurationError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return u, stats, grid, g_eff


def create_app() -> FastAPI:
    app = FastAPI(title="perihom", version=__version__)

    @app.exception_handler(ConfigError)
    def _config_error(request: Request, exc: ConfigError):
        return JSONResponse(status_code=422, content=exc.to_payload())

    @app.exception_handler(SolverFailure)
    def _solver_error(request: Request, exc: SolverFailure):
        return JSONResponse(
            status_code=500, content={"error": "solver", "message": str(exc)}
        )

    @app.exception_handler(StudyError)
    def _study_error(request: Request, exc: StudyError):
        partial = exc.partial.to_dict() if exc.partial is not None else None
        return JSONResponse(
            status_code=500,
            content=sanitize(
                {"error": "solver", "message": str(exc), "partial": partial}
            ),
        )

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/cell", response_model=CellResponse, response_model_exclude_none=True)
    def cell_endpoint(req: CellRequest):
        cfg = validate_config(req.config)
        cell, grid = run_cell(cfg)
        field = None
        if req.include_field:
            field = cell.corrector.reshape(grid.n_nodes, -1).tolist()
        return CellResponse(
            config_hash=config_hash(cfg),
            resolution=cfg.cell.resolution,
            g_eff=cell.g_eff.tolist(),
            g_under=cell.g_under.tolist(),
            g_bar=cell.g_bar.tolist(),
            corrector_l2=cell.corrector_l2,
            corrector_sup=cell.corrector_sup,
            dcorrector_l2=cell.dcorrector_l2,
            is_corrector_free=cell.is_corrector_free,
            iterations=sum(s.iterations for s in cell.stats),
            residual=max(s.residual for s in cell.stats),
            corrector=field,
        )

    @app.post("/solve", response_model=SolveResponse, response_model_exclude_none=True)
    def solve_endpoint(req: SolveRequest):
        cfg = validate_config(req.config)
        u, stats, grid, g_eff = run_solve(cfg)
        prob = cfg.problem
        return SolveResponse(
            config_hash=config_hash(cfg),
            kind=prob.kind,
            lam=prob.lam,
            eps=prob.eps if prob.kind.endswith("_eps") else None,
            n_dof=u.size,
            iterations=stats.iterations,
            residual=stats.residual,
            converged=stats.converged,
            u_l2=l2_norm(grid, u),
            u_h1=h1_norm(grid, u),
            g_eff=None if g_eff is None else g_eff.tolist(),
            solution=u.tolist() if req.include_field else None,
        )

    @app.post("/study", response_model=StudyResponse)
    def study_endpoint(req: StudyRequest):
        cfg = validate_config(req.config)
        plan = build_study_plan(cfg)
        report = run_study(plan)
        return StudyResponse(
            config_hash=config_hash(cfg),
            report=report_payload(report, config_hash(cfg)),
        )

    @app.post("/selftest", response_model=SelftestResponse)
    def selftest_endpoint():
        ok, checks = run_selftest()
        return SelftestResponse(ok=ok, checks=checks)

    return app


app = create_app()
