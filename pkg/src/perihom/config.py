"""Experiment definitions: TOML in, validated models out, and builders."""

import hashlib
import json
import math
from typing import List, Literal, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # interpreter < 3.11
    import tomli as tomllib

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .coefficients import (
    PeriodicCoefficient,
    checkerboard_coefficient,
    constant_coefficient,
    diag_cross_coefficient,
    grid_sample_coefficient,
    laminate_coefficient,
    trig_coefficient,
)
from .harness import StudyPlan
from .lattice_symbol import (
    Lattice,
    SymbolOperator,
    build_lattice,
    check_rank_condition,
    elasticity_2d_symbol,
    scalar_gradient_symbol,
    unit_lattice,
)


class ConfigError(ValueError):
    """Bad experiment definition; carries per-key diagnostics."""

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = list(details or [])

    def to_payload(self) -> dict:
        return {"error": "config", "message": str(self), "details": self.details}


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SymbolSection(_Section):
    kind: Literal["scalar_gradient", "elasticity_2d", "custom"] = "scalar_gradient"
    dim: int = Field(default=2, ge=1, le=3)
    matrices: Optional[List[List[List[float]]]] = None

    @model_validator(mode="after")
    def _check(self):
        if self.kind == "custom":
            if not self.matrices:
                raise ValueError("custom symbol needs matrices")
            shapes = {tuple(np.shape(m)) for m in self.matrices}
            if len(shapes) != 1:
                raise ValueError("custom symbol matrices must share one shape")
        elif self.matrices is not None:
            raise ValueError("matrices only apply to the custom symbol")
        return self


class LatticeSection(_Section):
    basis: Optional[List[List[float]]] = None


class CoefficientSection(_Section):
    kind: Literal[
        "constant", "laminate", "checkerboard", "trig", "diag_cross", "grid"
    ] = "constant"
    size: Optional[int] = Field(default=None, ge=1)
    value: float = 1.0
    values: List[float] = Field(default_factory=lambda: [1.0, 4.0])
    axis: int = Field(default=0, ge=0)
    split: float = Field(default=0.5, gt=0.0, lt=1.0)
    offset: float = 2.0
    amplitude: float = 1.0
    data: Optional[list] = None

    @model_validator(mode="after")
    def _check(self):
        if self.kind == "grid" and self.data is None:
            raise ValueError("grid coefficient needs data")
        if self.kind in ("laminate", "checkerboard") and len(self.values) != 2:
            raise ValueError("two phase values expected")
        return self


class ConstantsSection(_Section):
    garding_c1: float = Field(default=1.0, gt=0.0)
    garding_c2: float = Field(default=0.0, ge=0.0)


class CellSection(_Section):
    resolution: int = Field(default=16, ge=2)
    tol: float = Field(default=1e-10, gt=0.0)


class ProblemSection(_Section):
    kind: Literal["neumann_eps", "neumann_eff", "periodic_eps", "periodic_eff"] = (
        "neumann_eps"
    )
    lam: float = Field(default=1.0, ge=0.0)
    lengths: List[float] = Field(default_factory=lambda: [1.0, 1.0])
    resolution: int = Field(default=64, ge=2)
    eps: Optional[float] = Field(default=0.125, gt=0.0)
    tol: float = Field(default=1e-10, gt=0.0)

    @model_validator(mode="after")
    def _check(self):
        if self.kind.endswith("_eps") and self.eps is None:
            raise ValueError("oscillating problems need eps")
        return self


def _dyadic_decreasing(eps: List[float]) -> List[float]:
    for e in eps:
        k = math.log2(e)
        if abs(k - round(k)) > 1e-9:
            raise ValueError(f"eps {e} is not a power of two")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps values must be strictly decreasing")
    return eps


class StudySection(_Section):
    kind: Literal["square", "torus"] = "square"
    id: str = ""
    lam: float = Field(default=1.0, ge=0.0)
    eps: List[float] = Field(default_factory=lambda: [1 / 8, 1 / 16, 1 / 32, 1 / 64])
    cell_resolution: int = Field(default=16, ge=2)
    lengths: List[float] = Field(default_factory=lambda: [1.0, 1.0])
    interior_delta: Optional[float] = Field(default=None, gt=0.0)
    interior_delta_power: Optional[float] = Field(default=None, gt=0.0)
    tol: float = Field(default=1e-10, gt=0.0)

    @model_validator(mode="after")
    def _check(self):
        if not self.eps:
            raise ValueError("empty eps sweep")
        _dyadic_decreasing(self.eps)
        return self


class Config(_Section):
    symbol: SymbolSection = Field(default_factory=SymbolSection)
    lattice: LatticeSection = Field(default_factory=LatticeSection)
    coefficient: CoefficientSection = Field(default_factory=CoefficientSection)
    constants: ConstantsSection = Field(default_factory=ConstantsSection)
    cell: CellSection = Field(default_factory=CellSection)
    problem: ProblemSection = Field(default_factory=ProblemSection)
    study: StudySection = Field(default_factory=StudySection)
    seed: int = 0


def _validation_details(exc: ValidationError) -> list:
    out = []
    for err in exc.errors():
        key = ".".join(str(p) for p in err["loc"]) or "<root>"
        out.append({"key": key, "message": err["msg"]})
    return out


def validate_config(raw: dict) -> Config:
    """Validate an already-decoded mapping; raises ConfigError on problems."""
    try:
        return Config.model_validate(raw)
    except ValidationError as exc:
        details = _validation_details(exc)
        keys = ", ".join(d["key"] for d in details)
        raise ConfigError(f"invalid config ({keys})", details) from exc


def parse_config(text: str) -> Config:
    """Parse TOML text into a validated Config.

    Unknown keys, type mismatches, and constraint violations all raise
    ConfigError with key or line diagnostics.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(
            f"config is not valid TOML: {exc}",
            [{"key": "<syntax>", "message": str(exc)}],
        ) from exc
    return validate_config(raw)


def load_config(path) -> Config:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def _emit_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_emit_value(v) for v in value) + "]"
    raise TypeError(f"cannot emit {type(value).__name__}")


def emit_config(config: Config) -> str:
    """Round-trippable TOML for a Config: parse(emit(c)) == c."""
    dump = config.model_dump(exclude_none=True)
    lines = []
    for key, value in dump.items():
        if not isinstance(value, dict):
            lines.append(f"{key} = {_emit_value(value)}")
    for key, value in dump.items():
        if isinstance(value, dict):
            lines.append("")
            lines.append(f"[{key}]")
            for k, v in value.items():
                lines.append(f"{k} = {_emit_value(v)}")
    return "\n".join(lines) + "\n"


def config_hash(config: Config) -> str:
    """Stable content hash tying outputs to their experiment definition."""
    payload = json.dumps(
        config.model_dump(mode="json"), sort_keys=True, separators=(",", ":")
    )
    return hashlib.sha256(payload.encode()).hexdigest()


# --- builders -----------------------------------------------------------


def build_symbol(config: Config) -> SymbolOperator:
    sym = config.symbol
    if sym.kind == "scalar_gradient":
        return scalar_gradient_symbol(sym.dim)
    if sym.kind == "elasticity_2d":
        return elasticity_2d_symbol()
    return SymbolOperator(np.asarray(sym.matrices, dtype=float), name="custom")


def build_lattice_for(config: Config, op: SymbolOperator) -> Lattice:
    basis = config.lattice.basis
    if basis is None:
        return unit_lattice(op.dim)
    lat = build_lattice(basis)
    if lat.dim != op.dim:
        raise ConfigError(
            f"lattice dimension {lat.dim} does not match symbol dimension {op.dim}",
            [{"key": "lattice.basis", "message": "dimension mismatch"}],
        )
    return lat


def build_coefficient(config: Config, op: SymbolOperator) -> PeriodicCoefficient:
    sec = config.coefficient
    size = sec.size if sec.size is not None else op.rows
    if sec.kind == "constant":
        return constant_coefficient(sec.value, size)
    if sec.kind == "laminate":
        return laminate_coefficient(
            size, values=tuple(sec.values), axis=sec.axis, split=sec.split
        )
    if sec.kind == "checkerboard":
        return checkerboard_coefficient(size, values=tuple(sec.values))
    if sec.kind == "trig":
        return trig_coefficient(
            size, offset=sec.offset, amplitude=sec.amplitude, axis=sec.axis
        )
    if sec.kind == "diag_cross":
        return diag_cross_coefficient(offset=sec.offset, amplitude=sec.amplitude)
    return grid_sample_coefficient(np.asarray(sec.data, dtype=float), size)


def build_constants(config: Config, op: SymbolOperator):
    return check_rank_condition(
        op,
        garding_c1=config.constants.garding_c1,
        garding_c2=config.constants.garding_c2,
    )


def build_study_plan(config: Config) -> StudyPlan:
    op = build_symbol(config)
    lattice = build_lattice_for(config, op)
    coefficient = build_coefficient(config, op)
    study = config.study
    try:
        return StudyPlan(
            kind=study.kind,
            coefficient=coefficient,
            op=op,
            lattice=lattice,
            lam=study.lam,
            eps_list=tuple(study.eps),
            cell_resolution=study.cell_resolution,
            lengths=tuple(study.lengths),
            interior_delta=study.interior_delta,
            interior_delta_power=study.interior_delta_power,
            tol=study.tol,
            cell_tol=config.cell.tol,
            constants=build_constants(config, op),
            study_id=study.id or f"{config.coefficient.kind}-{study.kind}",
        )
    except ValueError as exc:
        raise ConfigError(str(exc), [{"key": "study", "message": str(exc)}]) from exc
