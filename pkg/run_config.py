"""
Run configuration: environment defaults, the versioned JSON schema and
validation of every domain inequality before any compute starts.
"""

import json
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from besov import build_ladder
from exponents import admissibility, damping_exponents, eps_bound, exponent_family, violations
from field_core import make_grid
from suite_errors import ConfigValidationError, ExponentError, GridError

logger = logging.getLogger(__name__)

DEFAULT_SEED = 20240611
DEFAULT_OUT_DIR = "runs"

# ------------------------
# Environment
# ------------------------


@dataclass(frozen=True)
class Settings:
    ledger_url: str
    out_dir: str
    seed: int
    log_level: str


def get_ledger_url(out_dir=None):
    """
    Ledger database URL with fallback for different environments.
    """
    # Explicit URL first
    if os.getenv("BOUSSINESQ_LEDGER_URL"):
        return os.getenv("BOUSSINESQ_LEDGER_URL")

    # A named SQLite file
    if os.getenv("BOUSSINESQ_LEDGER_PATH"):
        return f"sqlite:///{os.getenv('BOUSSINESQ_LEDGER_PATH')}"

    # Next to the run outputs
    base = out_dir or os.getenv("BOUSSINESQ_OUT_DIR", DEFAULT_OUT_DIR)
    return f"sqlite:///{Path(base) / 'ledger.sqlite'}"


def settings_from_env(out_dir=None):
    load_dotenv()
    try:
        seed = int(os.getenv("BOUSSINESQ_SEED", str(DEFAULT_SEED)))
    except ValueError:
        logger.warning("BOUSSINESQ_SEED is not an integer, using %d", DEFAULT_SEED)
        seed = DEFAULT_SEED
    out = out_dir or os.getenv("BOUSSINESQ_OUT_DIR", DEFAULT_OUT_DIR)
    return Settings(get_ledger_url(out), out, seed, os.getenv("BOUSSINESQ_LOG_LEVEL", "INFO").upper())


# ------------------------
# Schema
# ------------------------

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class GridSpec(_Strict):
    dim: Literal[2, 3] = 2
    n_per_axis: int = 64
    box_length: float = 2.0 * math.pi


class TimeSpec(_Strict):
    horizon: float = Field(4.0, gt=0)
    intervals: int = Field(32, ge=1)
    grading: float = Field(2.0, gt=1)


class ThetaSpec(_Strict):
    kind: Literal["zero", "interface", "smooth", "file"] = "zero"
    amplitude: float = 1.0
    width: float = Field(0.0, ge=0)
    mode: int = Field(1, ge=1)
    offset: float = 0.0
    path: Optional[str] = None


class VelocitySpec(_Strict):
    kind: Literal["zero", "single-mode", "random-band-limited", "shear-plus-swirl", "file"] = "zero"
    amplitude: float = 1.0
    mode: int = Field(1, ge=1)
    band: int = Field(4, ge=1)
    shear: float = 1.0
    swirl: float = 0.05
    path: Optional[str] = None


class DataSpec(_Strict):
    theta: ThetaSpec = ThetaSpec()
    velocity: VelocitySpec = VelocitySpec()
    trunc_level: int = Field(4, ge=0)
    cutoff_base: Optional[float] = Field(None, gt=0)


class ViscositySpec(_Strict):
    kind: Literal["constant", "tanh-perturbation", "user-table"] = "constant"
    value: float = Field(1.0, gt=0)
    delta: float = 0.0
    theta_scale: float = Field(1.0, gt=0)
    table: List[Tuple[float, float]] = []


class ExponentSpec(_Strict):
    p: float = 1.2
    r: float = 2.0
    regime: Literal["theorem1", "theorem2"] = "theorem1"


class SolverSpec(_Strict):
    eps: float = Field(0.0, ge=0)
    lambda_: Optional[float] = Field(None, alias="lambda", ge=0)
    c_r: float = Field(1.0, ge=0)
    c0: float = Field(0.05, gt=0)
    tol_outer: float = Field(1e-7, gt=0)
    max_outer: int = Field(40, ge=1)
    tol_inner: float = Field(1e-8, gt=0)
    max_inner: int = Field(50, ge=1)
    cfl: float = Field(0.5, gt=0, le=1)
    max_substeps: int = Field(10000, ge=1)
    divergence_threshold: float = Field(1e8, gt=0)
    divergence_patience: int = Field(4, ge=1)
    pressure_convention: Literal["formula", "momentum"] = "formula"
    max_principle_slack: Optional[float] = Field(None, ge=0)
    keep_states: bool = False


class ProbeSpec(_Strict):
    plain: Tuple[int, float, float] = (2, 1.2, 2.0)
    weighted: Tuple[int, float, float] = (3, 2.4, 16.0)
    n_per_axis: int = 16
    intervals: int = Field(16, ge=1)
    weighted_n_per_axis: int = 8
    weighted_intervals: int = Field(8, ge=1)
    horizon: float = Field(1.0, gt=0)
    ensemble_size: int = Field(32, ge=1)
    include_weighted: bool = True


class BesovSpec(_Strict):
    dim: Literal[2, 3] = 2
    n_per_axis: int = 32
    corpus_size: int = Field(20, ge=1)
    p: float = Field(3.0, ge=1)
    r: float = Field(2.0, ge=1)
    s_values: Optional[List[float]] = None


class SweepSpec(_Strict):
    kind: Literal["epsilon", "data-scale"] = "epsilon"
    eps_list: List[float] = [0.1, 0.01, 0.001, 0.0]
    scales: List[float] = [1.0, 0.5, 0.25]


class RunConfig(_Strict):
    schema_version: Literal[1] = 1
    grid: GridSpec = GridSpec()
    time: TimeSpec = TimeSpec()
    data: DataSpec = DataSpec()
    viscosity: ViscositySpec = ViscositySpec()
    exponents: ExponentSpec = ExponentSpec()
    solver: SolverSpec = SolverSpec()
    probes: ProbeSpec = ProbeSpec()
    besov: BesovSpec = BesovSpec()
    sweep: SweepSpec = SweepSpec()
    seed: Optional[int] = Field(None, ge=0, lt=2 ** 64)
    output_dir: Optional[str] = None

    def besov_s_values(self):
        if self.besov.s_values is not None:
            return list(self.besov.s_values)
        return [-0.5, -1.0, self.besov.dim / self.besov.p - 1.0]


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


# ------------------------
# Validation
# ------------------------

def _field_errors(exc):
    return [f"{'.'.join(str(part) for part in err['loc'])}: {err['msg']}" for err in exc.errors()]


def _grid_errors(label, dim, n, length):
    try:
        return make_grid(dim, n, length), []
    except GridError as exc:
        return None, [f"{label}: {exc}"]


def constraint_report(cfg):
    """Every regime inequality for the run tuple, evaluated, including advisory rows."""
    d = cfg.grid.dim
    ex = cfg.exponents
    rows = list(admissibility(d, ex.p, ex.r, ex.regime))
    rows.append(eps_bound(d, ex.p, ex.r, ex.regime, cfg.solver.eps))
    return rows


def _domain_errors(cfg):
    errors = []
    d = cfg.grid.dim
    ex = cfg.exponents

    grid, bad = _grid_errors("grid", d, cfg.grid.n_per_axis, cfg.grid.box_length)
    errors += bad
    if grid is not None:
        ladder = build_ladder(grid)
        top = max(abs(ladder.j_min), abs(ladder.j_max))
        if cfg.data.trunc_level > top:
            errors.append(f"data.trunc_level={cfg.data.trunc_level} exceeds the dyadic ladder "
                          f"[{ladder.j_min}, {ladder.j_max}]: |j| <= {top}")

    errors += [f"exponents: {c.describe()}" for c in violations(admissibility(d, ex.p, ex.r, ex.regime))]
    bound = eps_bound(d, ex.p, ex.r, ex.regime, cfg.solver.eps)
    if not bound.satisfied:
        errors.append(f"solver.eps: {bound.describe()}")
    try:
        if ex.regime == "theorem1":
            damping_exponents(d, ex.r, cfg.solver.eps)
        exponent_family(d, ex.p, ex.r, ex.regime)
    except ExponentError as exc:
        errors.append(f"exponents: {exc}")

    for label, values in (("sweep.eps_list", cfg.sweep.eps_list),):
        if any(v < 0 for v in values) or any(b > a for a, b in zip(values, values[1:])):
            errors.append(f"{label} must be non-increasing and non-negative: {values}")
    if cfg.sweep.kind == "epsilon":
        for value in cfg.sweep.eps_list:
            sweep_bound = eps_bound(d, ex.p, ex.r, ex.regime, value)
            if not sweep_bound.satisfied:
                errors.append(f"sweep.eps_list: {sweep_bound.describe()}")
    if any(s <= 0 for s in cfg.sweep.scales):
        errors.append(f"sweep.scales must be positive: {cfg.sweep.scales}")

    if cfg.viscosity.kind == "tanh-perturbation" and not abs(cfg.viscosity.delta) < 1:
        errors.append(f"viscosity.delta: |delta| < 1 violated: delta={cfg.viscosity.delta}")
    if cfg.viscosity.kind == "user-table":
        table = cfg.viscosity.table
        if len(table) < 2:
            errors.append("viscosity.table needs at least two (theta, nu) points")
        elif any(b[0] <= a[0] for a, b in zip(table, table[1:])) or min(nu for _, nu in table) <= 0:
            errors.append("viscosity.table needs increasing theta and positive nu")

    for spec, kind in ((cfg.data.theta, "theta"), (cfg.data.velocity, "velocity")):
        if spec.kind == "file" and not spec.path:
            errors.append(f"data.{kind}.path is required for kind 'file'")

    pd_, pp, pr = cfg.probes.plain
    errors += [f"probes.plain: {c.describe()}" for c in violations(admissibility(pd_, pp, pr, "theorem1"))]
    _, bad = _grid_errors("probes", pd_, cfg.probes.n_per_axis, 2.0 * math.pi)
    errors += bad
    if cfg.probes.include_weighted:
        wd, wp, wr = cfg.probes.weighted
        errors += [f"probes.weighted: {c.describe()}" for c in violations(admissibility(wd, wp, wr, "theorem2"))]
        _, bad = _grid_errors("probes.weighted", wd, cfg.probes.weighted_n_per_axis, 2.0 * math.pi)
        errors += bad

    _, bad = _grid_errors("besov", cfg.besov.dim, cfg.besov.n_per_axis, 2.0 * math.pi)
    errors += bad
    return errors


def validate(raw):
    """
    Parse and check a run configuration. Raises ConfigValidationError with
    every problem found, field errors and violated inequalities together.
    """
    if isinstance(raw, RunConfig):
        raw = raw.model_dump(by_alias=True)
    try:
        cfg = RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigValidationError(_field_errors(exc)) from exc
    errors = _domain_errors(cfg)
    if errors:
        raise ConfigValidationError(errors)
    return cfg


def apply_overrides(raw, seed=None, out=None, settings=None):
    """CLI flags beat the file; the environment fills what both omit."""
    merged = dict(raw or {})
    settings = settings or settings_from_env(out)
    if seed is not None:
        merged["seed"] = seed
    elif merged.get("seed") is None:
        merged["seed"] = settings.seed
    if out is not None:
        merged["output_dir"] = out
    elif merged.get("output_dir") is None:
        merged["output_dir"] = settings.out_dir
    return merged
