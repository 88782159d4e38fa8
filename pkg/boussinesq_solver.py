"""
Constructive Picard scheme for the variable-viscosity Boussinesq system

    d_t theta - eps Lap theta + div(theta u) = 0
    d_t u - Lap u + grad Pi = g + div{(nu(theta) - 1) M},   div u = 0

on the periodic box: dyadic data preparation, the regularized transport
step, the linear Stokes solve with its inner fixed point, pressure recovery
and the outer iteration with contraction monitoring.
"""

import logging
import math
from dataclasses import dataclass, field as dc_field, replace
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import PchipInterpolator

from besov import BesovIndex, besov_norm_dyadic, build_ladder, cutoff, partial_dyadic_sum
from duhamel import DampingWeight, exponential_convolution
from exponents import check_regime, require_admissible
from field_core import (PhysicalField, SpectralField, derivative, divergence, from_function, gradient,
                        horizontal_part, lp_norm, multiply, multiply_physical, pointwise_magnitude,
                        random_band_limited, resample, spectral_l2_norm, symmetric_gradient,
                        to_physical, to_spectral, vertical_part, make_grid)
from harmonic_ops import leray_project, riesz_divergence, riesz_double_divergence, riesz_potential
from norms_monitor import damping_weight, delta_u, gronwall_tails, theorem_report, y_norm
from suite_errors import (DomainError, GridMismatchError, NonFiniteFieldError, NumericalInvariantError,
                          TransportCFLError)
from timeline import SpaceTimeNormSpec, Timeline, graded_times, spacetime_norm

logger = logging.getLogger(__name__)

VISCOSITY_KINDS = ("constant", "tanh-perturbation", "user-table")
PRESSURE_CONVENTIONS = ("formula", "momentum")
NU_SAMPLES = 2049
DIVERGENCE_TOL = 1e-8
FACTOR_FLOOR = 1e-13


def _as_spectral(field):
    return field if isinstance(field, SpectralField) else to_spectral(field)


def band_limited_sup(field):
    """Supremum of a trigonometric polynomial, sampled on an oversampled lattice."""
    field = _as_spectral(field)
    factor = 4 if field.grid.dim == 2 else 2
    fine = resample(field, factor * field.grid.n_per_axis)
    return float(np.max(np.abs(to_physical(fine).values)))


def heat_flow(field, times, diffusivity=1.0):
    """e^{t Lap} field at every time node, as a Timeline."""
    times = np.asarray(times, dtype=float)
    mult = np.exp(-diffusivity * np.multiply.outer(times, field.grid.k_squared))
    coeffs = np.expand_dims(field.coeffs, field.rank) * mult
    return Timeline(times, field.with_coeffs(coeffs))


# ------------------------
# Viscosity
# ------------------------

@dataclass(frozen=True)
class ViscosityLaw:
    kind: str = "constant"
    value: float = 1.0
    delta: float = 0.0
    theta_scale: float = 1.0
    table: tuple = ()

    def __post_init__(self):
        if self.kind not in VISCOSITY_KINDS:
            raise DomainError(f"viscosity kind must be one of {VISCOSITY_KINDS}, got {self.kind!r}")
        if self.kind == "constant" and not self.value > 0:
            raise DomainError(f"constant viscosity must be positive, got {self.value}")
        if self.kind == "tanh-perturbation":
            if not abs(self.delta) < 1:
                raise DomainError(f"|delta| < 1 keeps nu positive, got delta={self.delta}")
            if not self.theta_scale > 0:
                raise DomainError(f"theta_scale must be positive, got {self.theta_scale}")
        if self.kind == "user-table":
            if len(self.table) < 2:
                raise DomainError("user-table viscosity needs at least two (theta, nu) points")
            xs, ys = zip(*self.table)
            if np.any(np.diff(xs) <= 0):
                raise DomainError("user-table theta values must be strictly increasing")
            if min(ys) <= 0:
                raise DomainError("user-table nu values must be positive")

    @cached_property
    def _interpolator(self):
        xs, ys = zip(*self.table)
        return PchipInterpolator(np.array(xs, float), np.array(ys, float))

    @property
    def is_unit(self):
        return self.kind == "constant" and self.value == 1.0

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.kind == "constant":
            return np.full_like(theta, self.value)
        if self.kind == "tanh-perturbation":
            return 1.0 + self.delta * np.tanh(theta / self.theta_scale)
        lo, hi = self.table[0][0], self.table[-1][0]
        return self._interpolator(np.clip(theta, lo, hi))

    def _samples(self, bound):
        if bound is None:
            if self.kind == "user-table":
                return np.linspace(self.table[0][0], self.table[-1][0], NU_SAMPLES)
            bound = 50.0 * self.theta_scale
        return np.linspace(-bound, bound, NU_SAMPLES)

    def nu_dev(self, bound=None):
        """||nu - 1||_inf over |theta| <= bound (all theta when bound is None)."""
        if self.kind == "constant":
            return abs(self.value - 1.0)
        if self.kind == "tanh-perturbation":
            return abs(self.delta) if bound is None else abs(self.delta) * math.tanh(bound / self.theta_scale)
        return float(np.max(np.abs(self(self._samples(bound)) - 1.0)))

    def nu_min(self, bound=None):
        if self.kind == "constant":
            return self.value
        return float(np.min(self(self._samples(bound))))

    def describe(self):
        return {"kind": self.kind, "value": self.value, "delta": self.delta,
                "theta_scale": self.theta_scale, "table": [list(row) for row in self.table]}


# ------------------------
# Initial data
# ------------------------

@dataclass(frozen=True, eq=False)
class InitialData:
    theta0: PhysicalField
    u0: SpectralField
    trunc_level: int
    cutoff_radius: Optional[float]
    theta_sup: float
    theta_sup_raw: float

    @property
    def grid(self):
        return self.u0.grid

    @property
    def gibbs_factor(self):
        return self.theta_sup / self.theta_sup_raw if self.theta_sup_raw > 0 else 1.0

    def besov_norms(self, p, r):
        """(||u0^h||, ||u0^d||) in the critical space of regularity d/p - 1."""
        idx = BesovIndex.critical(self.grid.dim, p, r)
        return (besov_norm_dyadic(horizontal_part(self.u0), idx),
                besov_norm_dyadic(vertical_part(self.u0), idx))

    def divergence_residual(self):
        return float(spectral_l2_norm(divergence(self.u0)))

    def describe(self):
        return {"trunc_level": self.trunc_level, "cutoff_radius": self.cutoff_radius,
                "theta_sup": self.theta_sup, "theta_sup_raw": self.theta_sup_raw,
                "gibbs_factor": self.gibbs_factor}


def _raw_sup(field):
    if isinstance(field, PhysicalField):
        return float(np.max(np.abs(field.values)))
    return band_limited_sup(field)


def prepare_data(theta_raw, u_raw, n, box=None, cutoff_base=None):
    """
    theta0_n = chi_n (mean + sum_{|j|<=n} blocks of theta), u0_n = P sum_{|j|<=n} blocks of u.

    ``box`` optionally pins the grid the data must live on. The cutoff is
    only applied when ``cutoff_base`` is given, with radius 2^n cutoff_base
    around the box centre.
    """
    grid = theta_raw.grid
    if box is not None and box != grid:
        raise GridMismatchError(f"data grid {grid} does not match box {box}")
    if u_raw.grid != grid:
        raise GridMismatchError("temperature and velocity data live on different grids")
    if u_raw.rank != 1:
        raise DomainError("velocity data must be a vector field")
    ladder = build_ladder(grid)
    top = max(abs(ladder.j_min), abs(ladder.j_max))
    if n > top:
        raise DomainError(f"truncation level {n} exceeds the dyadic ladder [{ladder.j_min}, {ladder.j_max}]")
    theta_hat = _as_spectral(theta_raw)
    mean = theta_hat.coeffs[grid.zero_mode]
    coeffs = np.array(partial_dyadic_sum(theta_hat, n, ladder).coeffs)
    coeffs[grid.zero_mode] = mean
    values = to_physical(theta_hat.with_coeffs(coeffs)).values
    radius = None
    if cutoff_base is not None:
        radius = 2.0 ** n * cutoff_base
        centre = grid.box_length / 2.0
        dist = np.sqrt(sum((x - centre) ** 2 for x in grid.coordinates()))
        values = values * cutoff(dist / radius)
    theta0 = PhysicalField(grid, values)
    u0 = leray_project(partial_dyadic_sum(_as_spectral(u_raw), n, ladder))
    data = InitialData(theta0, u0, int(n), radius, band_limited_sup(theta0), _raw_sup(theta_raw))
    logger.debug("prepared data at level %d: theta sup %.6g (gibbs %.4f)", n, data.theta_sup, data.gibbs_factor)
    return data


def rescale_data(data, factor):
    """(theta0(f x), f u0(f x)) on a box of length L / f; time horizons scale by 1 / f^2."""
    if not factor > 0:
        raise DomainError(f"scaling factor must be positive, got {factor}")
    grid = data.grid
    target = make_grid(grid.dim, grid.n_per_axis, grid.box_length / factor)
    radius = None if data.cutoff_radius is None else data.cutoff_radius / factor
    return InitialData(PhysicalField(target, data.theta0.values), SpectralField(target, data.u0.coeffs * factor, 1),
                       data.trunc_level, radius, data.theta_sup, data.theta_sup_raw)


# ------------------------
# Smallness
# ------------------------

@dataclass(frozen=True)
class SmallnessReport:
    nu_dev: float
    uh_besov: float
    ud_besov: float
    c_r: float
    c0: float
    eta: float
    regime: str
    p: float
    r: float

    @property
    def satisfied(self):
        return self.eta <= self.c0

    def as_dict(self):
        return {"nu_dev": self.nu_dev, "uh_besov": self.uh_besov, "ud_besov": self.ud_besov,
                "c_r": self.c_r, "c0": self.c0, "eta": self.eta, "regime": self.regime,
                "p": self.p, "r": self.r, "satisfied": self.satisfied}


def eta_from_ingredients(nu_dev, uh, ud, r, regime, c_r=1.0, c0=0.05, p=float("nan")):
    check_regime(regime)
    power = 4 * r if regime == "theorem1" else 2 * r
    with np.errstate(over="ignore"):
        value = float((nu_dev + uh) * np.exp(c_r * ud ** power))
    return SmallnessReport(nu_dev, uh, ud, c_r, c0, value, regime, p, r)


def eta(data, law, p, r, regime, c_r=1.0, c0=0.05):
    require_admissible(data.grid.dim, p, r, regime)
    uh, ud = data.besov_norms(p, r)
    return eta_from_ingredients(law.nu_dev(data.theta_sup), uh, ud, r, regime, c_r, c0, p)


def lambda_recipe(ud_besov, r, four_c=1.0, c2=1.0, c3=1.0):
    """(4C)^{4r} (C2 |u0^d| + C3)^{2r} with surrogate constants."""
    return four_c ** (4 * r) * (c2 * ud_besov + c3) ** (2 * r)


# ------------------------
# Transport
# ------------------------

def _velocity_at(u, n, w):
    if w == 0:
        return u.snapshot(n)
    return u.snapshot(n).with_coeffs((1.0 - w) * u.node_array(n) + w * u.node_array(n + 1))


def _advection(theta_coeffs, velocity):
    theta = SpectralField(velocity.grid, theta_coeffs)
    return -divergence(multiply(theta, velocity)).coeffs


def _ssp_rk3(coeffs, u, n, w0, w1, wh, dt):
    v0, v1, vh = _velocity_at(u, n, w0), _velocity_at(u, n, w1), _velocity_at(u, n, wh)
    k1 = coeffs + dt * _advection(coeffs, v0)
    k2 = 0.75 * coeffs + 0.25 * (k1 + dt * _advection(k1, v1))
    return coeffs / 3.0 + 2.0 / 3.0 * (k2 + dt * _advection(k2, vh))


def transport_step(theta0, u, eps, cfl=0.5, max_substeps=10000):
    """
    theta on the nodes of u, from theta0 at t = 0: Strang splitting of exact
    eps-diffusion half steps around an SSP-RK3 step of -div(theta u), with u
    linear in time between nodes and max|u| dt <= cfl L / N per substep.
    """
    if eps < 0:
        raise DomainError(f"eps must be non-negative, got {eps}")
    grid = u.grid
    theta = _as_spectral(theta0)
    if theta.grid != grid:
        raise GridMismatchError("initial temperature and velocity live on different grids")
    if theta.rank != 0 or theta.batch_shape:
        raise DomainError("transport_step needs a single scalar snapshot")
    dx = grid.box_length / grid.n_per_axis
    speeds = np.max(pointwise_magnitude(to_physical(u.field).values, 1), axis=grid.spatial_axes)
    kappa = eps * grid.k_squared
    current = np.array(theta.coeffs)
    snapshots = [theta]
    for n, h in enumerate(u.steps):
        vmax = max(speeds[n], speeds[n + 1])
        count = max(1, math.ceil(vmax * h / (cfl * dx)))
        if count > max_substeps:
            raise TransportCFLError(f"interval {n} needs {count} substeps, budget is {max_substeps}")
        dt = h / count
        half = np.exp(-0.5 * kappa * dt)
        for k in range(count):
            current = half * current
            if vmax > 0:
                current = _ssp_rk3(current, u, n, k / count, (k + 1) / count, (k + 0.5) / count, dt)
            current = half * current
        if not np.all(np.isfinite(current)):
            raise NonFiniteFieldError(f"temperature became non-finite on interval {n}")
        snapshots.append(SpectralField(grid, current))
    return Timeline.from_snapshots(u.times, snapshots, u.grading)


# ------------------------
# Stokes with linear perturbation
# ------------------------

def viscous_stress(theta, u_prev, law, matrix="symmetric"):
    """(nu(theta) - 1) M_n with nu evaluated pointwise on the samples of theta."""
    grid = u_prev.grid
    mat = symmetric_gradient(u_prev.field) if matrix == "symmetric" else gradient(u_prev.field)
    if law.is_unit:
        return u_prev.with_field(SpectralField(grid, np.zeros_like(mat.coeffs), 2))
    nu = law(to_physical(theta.field).values)
    return u_prev.with_field(multiply_physical(nu - 1.0, mat))


def horizontal_advection(u_prev):
    """u^h . grad u^h as a vector time line whose vertical component is zero."""
    uh = u_prev.map(horizontal_part)
    grad = uh.map(gradient)
    return u_prev.with_field(multiply(uh.field, grad.field, "i...,ji...->j..."))


def compute_g(u_prev, w, advection=None):
    """
    g^h = -(u_n^d d_d w^h + u_n^h . grad u_n^h)
    g^d = -(grad^h u_n^d . w^h - u_n^d div^h w^h)
    """
    grid = w.grid
    d = grid.dim
    ud = vertical_part(u_prev.field)
    wh = horizontal_part(w.field)
    if advection is None:
        advection = horizontal_advection(u_prev)
    gh = -(multiply(ud, derivative(wh, d - 1)) + advection.field)
    grad_ud = horizontal_part(gradient(ud))
    gd = -(multiply(grad_ud, wh, "i...,i...->...") - multiply(ud, divergence(wh)))
    coeffs = np.array(gh.coeffs)
    coeffs[d - 1] = gd.coeffs
    return w.with_field(SpectralField(grid, coeffs, 1))


def stress_forcing(stress):
    """int grad e^{(t-s)Lap} R.R.A ds + int div e^{(t-s)Lap} A ds."""
    f2 = exponential_convolution(stress.map(riesz_double_divergence), "B")
    f3 = exponential_convolution(stress, "div")
    return f2 + f3


@dataclass(eq=False)
class StokesResult:
    u: Timeline
    pi: Timeline
    g: Timeline
    iterations: int
    converged: bool
    updates: list = dc_field(default_factory=list)
    factors: list = dc_field(default_factory=list)
    weight: Optional[DampingWeight] = None

    def __iter__(self):
        return iter((self.u, self.pi))

    @property
    def last_factor(self):
        return self.factors[-1] if self.factors else None


def linear_stokes_solve(u_prev, theta_new, data, law, lambda_, r=2.0, tol=1e-8, max_inner=50,
                        pressure_convention="formula", regime="theorem1", p=None):
    """
    u_{n+1} = e^{t Lap} u0 + C(P g(u_{n+1})) + F2 + F3 by an inner fixed point
    started from u_prev. Stops on the relative update in the undamped Y_r
    norm; the lambda-damped contraction factors are recorded alongside, with
    the damping weight built for ``regime`` (``p`` is required for theorem2).
    """
    u_prev.same_nodes(theta_new)
    times = u_prev.times
    base = heat_flow(data.u0, times)
    if not law.is_unit:
        base = base + stress_forcing(viscous_stress(theta_new, u_prev, law))
    advection = horizontal_advection(u_prev)
    weight = damping_weight(u_prev, lambda_, regime, r, p)
    w = u_prev
    updates, factors = [], []
    previous_damped = None
    converged = False
    iterations = 0
    for iterations in range(1, max_inner + 1):
        g = compute_g(u_prev, w, advection)
        w_new = base + exponential_convolution(g.map(leray_project), "C")
        if not w_new.is_finite():
            raise NonFiniteFieldError(f"velocity became non-finite in inner iteration {iterations}")
        diff = w_new - w
        size = y_norm(w_new, r)
        change = y_norm(diff, r)
        update = change / size if size > 0 else change
        damped = y_norm(weight.damp(diff), r)
        if previous_damped is not None and previous_damped > FACTOR_FLOOR:
            factors.append(damped / previous_damped)
        previous_damped = damped
        updates.append(update)
        w = w_new
        logger.debug("inner %d: update %.3e damped %.3e", iterations, update, damped)
        if update < tol:
            converged = True
            break
    if not converged:
        logger.warning("inner Stokes loop stopped after %d iterations, last update %.3e, last factor %s",
                       iterations, updates[-1], factors[-1] if factors else None)
    g = compute_g(u_prev, w, advection)
    pi = recover_pressure(g, theta_new, u_prev, law, pressure_convention)
    return StokesResult(w, pi, g, iterations, converged, updates, factors, weight)


def recover_pressure(g, theta, u_prev, law, convention="formula"):
    """
    formula:  Pi = -(-Lap)^{-1/2} R.g - R.R.{(nu - 1) grad u_n}
    momentum: Pi = (-Lap)^{-1/2} R.g - R.R.{(nu - 1) M_n}, so grad Pi is the
    gradient part of g + div{(nu - 1) M_n}.
    """
    if convention not in PRESSURE_CONVENTIONS:
        raise DomainError(f"pressure convention must be one of {PRESSURE_CONVENTIONS}, got {convention!r}")
    potential = g.field.with_coeffs(riesz_potential(riesz_divergence(g.field)).coeffs, 0)
    matrix = "gradient" if convention == "formula" else "symmetric"
    stress_term = riesz_double_divergence(viscous_stress(theta, u_prev, law, matrix).field)
    sign = -1.0 if convention == "formula" else 1.0
    return g.with_field(potential * sign - stress_term)


# ------------------------
# Outer iteration
# ------------------------

@dataclass(frozen=True)
class SolverConfig:
    horizon: float = 4.0
    intervals: int = 32
    grading: float = 2.0
    eps: float = 0.0
    p: float = 1.2
    r: float = 2.0
    regime: str = "theorem1"
    lambda_: Optional[float] = None
    c_r: float = 1.0
    c0: float = 0.05
    tol_outer: float = 1e-7
    max_outer: int = 40
    tol_inner: float = 1e-8
    max_inner: int = 50
    cfl: float = 0.5
    max_substeps: int = 10000
    divergence_threshold: float = 1e8
    divergence_patience: int = 4
    pressure_convention: str = "formula"
    max_principle_slack: Optional[float] = None
    keep_states: bool = False

    @property
    def slack(self):
        if self.max_principle_slack is not None:
            return self.max_principle_slack
        return 1e-6 if self.eps > 0 else 1e-3

    def times(self):
        return graded_times(self.horizon, self.intervals, self.grading)


@dataclass(eq=False)
class SolverState:
    n: int
    theta: Timeline
    u: Timeline
    pi: Timeline
    norm_ledger: dict = dc_field(default_factory=dict)
    delta_U: Optional[float] = None


@dataclass
class ConvergenceHistory:
    status: str = "running"
    message: str = ""
    iterations: int = 0
    lambda_: float = 0.0
    smallness: dict = dc_field(default_factory=dict)
    delta_u: list = dc_field(default_factory=list)
    delta_u_damped: list = dc_field(default_factory=list)
    ratios: list = dc_field(default_factory=list)
    inner_iterations: list = dc_field(default_factory=list)
    inner_factors: list = dc_field(default_factory=list)
    max_principle: list = dc_field(default_factory=list)
    divergence: list = dc_field(default_factory=list)
    gronwall: list = dc_field(default_factory=list)
    ledger: list = dc_field(default_factory=list)

    @property
    def converged(self):
        return self.status == "converged"

    def finish(self, status, message=""):
        self.status = status
        self.message = message
        log = logger.info if status == "converged" else logger.warning
        log("picard finished: %s after %d iterations %s", status, self.iterations, message)

    def raise_for_invariants(self):
        if self.status == "invariant_violation":
            raise NumericalInvariantError(self.message)

    def to_dict(self):
        return {key: getattr(self, key) for key in (
            "status", "message", "iterations", "lambda_", "smallness", "delta_u", "delta_u_damped", "ratios",
            "inner_iterations", "inner_factors", "max_principle", "divergence", "gronwall")}


def divergence_ratio(u):
    """max over nodes of ||div u||_2 / ||grad u||_2 (0 where grad u vanishes)."""
    div = np.atleast_1d(spectral_l2_norm(divergence(u.field)))
    grad = np.atleast_1d(spectral_l2_norm(gradient(u.field)))
    ratios = np.divide(div, grad, out=np.zeros_like(div), where=grad > 0)
    return float(np.max(ratios))


def _zero_state(grid, times, grading):
    return SolverState(0, Timeline.zeros(grid, times, 0, grading), Timeline.zeros(grid, times, 1, grading),
                       Timeline.zeros(grid, times, 0, grading))


def picard_solve(data, law, config=SolverConfig()):
    """
    Outer iteration from (theta, u, Pi) = 0. Numerical trouble never
    raises: the returned history carries the status, and
    ``history.raise_for_invariants()`` turns a violation into an exception.
    """
    check_regime(config.regime)
    require_admissible(data.grid.dim, config.p, config.r, config.regime)
    smallness = eta(data, law, config.p, config.r, config.regime, config.c_r, config.c0)
    if not smallness.satisfied:
        logger.warning("smallness condition not met: eta=%.4g > c0=%.4g", smallness.eta, smallness.c0)
    lam = config.lambda_ if config.lambda_ is not None else lambda_recipe(smallness.ud_besov, config.r)
    history = ConvergenceHistory(lambda_=float(lam), smallness=smallness.as_dict())
    times = config.times()
    state = _zero_state(data.grid, times, config.grading)
    states = [state]
    previous_damped = None
    rising = 0
    for n in range(config.max_outer):
        try:
            theta = transport_step(data.theta0, state.u, config.eps, config.cfl, config.max_substeps)
            stokes = linear_stokes_solve(state.u, theta, data, law, lam, config.r, config.tol_inner,
                                         config.max_inner, config.pressure_convention,
                                         regime=config.regime, p=config.p)
        except (TransportCFLError, NonFiniteFieldError) as exc:
            history.finish("diverged", str(exc))
            break
        nxt = SolverState(n + 1, theta, stokes.u, stokes.pi)
        plain = delta_u(state, nxt, 0.0, config.regime, config.r, config.p, config.eps)
        damped = delta_u(state, nxt, lam, config.regime, config.r, config.p, config.eps)
        theta_max = float(np.max(np.atleast_1d(lp_norm(theta.field, np.inf))))
        principle = theta_max / data.theta_sup if data.theta_sup > 0 else (0.0 if theta_max == 0 else np.inf)
        div_ratio = divergence_ratio(stokes.u)
        ratio = damped.value / previous_damped if previous_damped else None
        previous_damped = damped.value
        nxt.delta_U = plain.value
        nxt.norm_ledger = {"n": n + 1, "delta_u": plain.value, "delta_u_damped": damped.value, "ratio": ratio,
                           "theta_sup": theta_max, "max_principle": principle, "divergence": div_ratio,
                           "inner_iterations": stokes.iterations, "inner_factor": stokes.last_factor,
                           "uh_y": y_norm(stokes.u.map(horizontal_part), config.r),
                           "ud_y": y_norm(stokes.u.map(vertical_part), config.r)}
        history.iterations = n + 1
        history.delta_u.append(plain.value)
        history.delta_u_damped.append(damped.value)
        history.inner_iterations.append(stokes.iterations)
        history.inner_factors.append(stokes.factors)
        history.max_principle.append(principle)
        history.divergence.append(div_ratio)
        history.gronwall.append(gronwall_tails(times, damped.profile, config.eps))
        history.ledger.append(nxt.norm_ledger)
        if ratio is not None:
            history.ratios.append(ratio)
            rising = rising + 1 if ratio > 1 else 0
        states = (states if config.keep_states else states[-1:]) + [nxt]
        state = nxt
        logger.info("iteration %d: dU=%.3e dU_lambda=%.3e ratio=%s inner=%d",
                    n + 1, plain.value, damped.value, "-" if ratio is None else f"{ratio:.3f}", stokes.iterations)
        if not (np.isfinite(plain.value) and nxt.u.is_finite() and nxt.theta.is_finite()):
            history.finish("diverged", f"non-finite iterate at n={n + 1}")
            break
        if principle > 1.0 + config.slack:
            history.finish("invariant_violation",
                           f"maximum principle: sup theta = {principle:.8f} x sup theta0 at n={n + 1}")
            break
        if div_ratio > DIVERGENCE_TOL:
            history.finish("invariant_violation", f"divergence ratio {div_ratio:.3e} at n={n + 1}")
            break
        if plain.value > config.divergence_threshold:
            history.finish("diverged", f"dU={plain.value:.3e} above {config.divergence_threshold:g}")
            break
        if rising >= config.divergence_patience:
            history.finish("diverged", f"{rising} consecutive contraction ratios above 1")
            break
        if plain.value < config.tol_outer:
            history.finish("converged")
            break
    else:
        history.finish("max_iterations")
    return states, history


# ------------------------
# Navier-Stokes oracle
# ------------------------

def navier_stokes_mild_solve(u0, times, tol=1e-10, max_iter=200, grading=2.0):
    """
    Separate path for nu = 1, theta = 0: u = e^{t Lap} u0 - C(P div(u x u)).
    Returns (Timeline, iterations).
    """
    linear = heat_flow(u0, times)
    u = linear
    for it in range(1, max_iter + 1):
        flux = multiply(u.field, u.field, "i...,j...->ij...")
        forcing = u.with_field(leray_project(-divergence(flux)))
        nxt = linear + exponential_convolution(forcing, "C")
        scale = float(np.max(np.atleast_1d(spectral_l2_norm(nxt.field))))
        change = float(np.max(np.atleast_1d(spectral_l2_norm((nxt - u).field))))
        u = nxt
        if change <= tol * max(scale, 1e-300):
            return u, it
    logger.warning("navier_stokes_mild_solve stopped at %d iterations", max_iter)
    return u, max_iter


# ------------------------
# Sweeps
# ------------------------

@dataclass
class SweepRun:
    label: float
    final: SolverState
    history: ConvergenceHistory
    smallness: Optional[SmallnessReport] = None
    reports: list = dc_field(default_factory=list)


def epsilon_sweep(data, law, config, eps_list):
    """
    One run per eps plus the successive differences
    ||u_e - u_e'||_{L^2r L^{dr/(r-1)}} and sup_t ||theta_e - theta_e'||_2.
    """
    eps_list = [float(e) for e in eps_list]
    if not eps_list:
        raise DomainError("eps_list is empty")
    if min(eps_list) < 0 or any(b > a for a, b in zip(eps_list, eps_list[1:])):
        raise DomainError(f"eps_list must be non-increasing and non-negative, got {eps_list}")
    if eps_list[-1] != 0:
        logger.warning("eps_list does not end at 0: %s", eps_list)
    runs = []
    for value in eps_list:
        states, history = picard_solve(data, law, replace(config, eps=value))
        runs.append(SweepRun(value, states[-1], history))
    d, r = data.grid.dim, config.r
    spec = SpaceTimeNormSpec(2 * r, d * r / (r - 1.0))
    rows = []
    for a, b in zip(runs, runs[1:]):
        du = spacetime_norm(a.final.u - b.final.u, spec)
        dtheta = float(np.max(np.atleast_1d(spectral_l2_norm((a.final.theta - b.final.theta).field))))
        rows.append({"eps_a": a.label, "eps_b": b.label, "u_difference": du, "theta_difference": dtheta,
                     "status_a": a.history.status, "status_b": b.history.status})
    return runs, rows


def data_scale_sweep(data, law, config, scales=(1.0, 0.5, 0.25)):
    """Scale the horizontal data by each factor, keep the vertical data, and report the displays."""
    d = data.grid.dim
    runs = []
    for scale in scales:
        coeffs = np.array(data.u0.coeffs)
        coeffs[:d - 1] *= scale
        scaled = replace(data, u0=leray_project(data.u0.with_coeffs(coeffs)))
        states, history = picard_solve(scaled, law, config)
        smallness = eta(scaled, law, config.p, config.r, config.regime, config.c_r, config.c0)
        reports = theorem_report(states, config.regime, smallness, history.status)
        runs.append(SweepRun(float(scale), states[-1], history, smallness, reports))
    return runs


# ------------------------
# Data generators
# ------------------------

def _wavenumber(grid, mode):
    return 2.0 * np.pi * mode / grid.box_length


def interface_temperature(grid, amplitude=1.0, width=0.0):
    """sign(x1 - L/2), or a tanh-smoothed version across both periodic interfaces."""
    length = grid.box_length
    if width > 0:
        return from_function(grid, lambda *x: -amplitude * np.tanh(np.sin(2 * np.pi * x[0] / length) / width))
    return from_function(grid, lambda *x: amplitude * np.sign(x[0] - length / 2.0))


def smooth_temperature(grid, amplitude=1.0, mode=1, offset=0.0):
    k = _wavenumber(grid, mode)

    def fn(*x):
        value = np.sin(k * x[0])
        for xi in x[1:]:
            value = value * np.cos(k * xi)
        return offset + amplitude * value

    return from_function(grid, fn)


def single_mode_velocity(grid, mode=1, amplitude=1.0):
    """Vertical velocity amplitude sin(k x1); divergence-free with vanishing advection."""
    k = _wavenumber(grid, mode)
    zero = np.zeros(grid.shape)
    return from_function(grid, lambda *x: [zero] * (grid.dim - 1) + [amplitude * np.sin(k * x[0])])


def random_band_limited_velocity(grid, seed, band=4, amplitude=1.0):
    rng = np.random.default_rng(seed)
    return leray_project(random_band_limited(grid, rng, rank=1, band=band, amplitude=amplitude))


def shear_plus_swirl_velocity(grid, shear=1.0, swirl=0.05, mode=1):
    """
    Vertical shear depending only on horizontal coordinates plus a
    horizontal swirl that is divergence-free on its own, so either part can
    be rescaled without breaking incompressibility.
    """
    k = _wavenumber(grid, mode)
    if grid.dim == 2:
        return from_function(grid, lambda x1, x2: [swirl * np.sin(k * x2), shear * np.sin(k * x1)])
    return from_function(grid, lambda x1, x2, x3: [
        -swirl * k * np.sin(k * x1) * np.cos(k * x2) * np.cos(k * x3),
        swirl * k * np.cos(k * x1) * np.sin(k * x2) * np.cos(k * x3),
        shear * np.sin(k * x1) * np.cos(k * x2),
    ])


# ------------------------
# Residual checks
# ------------------------

def weak_transport_residual(theta, u, theta0, eps, mode=None):
    """
    Relative residual of
      int_0^T int theta (d_t phi + eps Lap phi + u . grad phi) + int theta0 phi(0) = 0
    for phi = (1 - t/T)^2 prod_i cos(k_i x_i).
    """
    grid = theta.grid
    mode = mode or (1,) * grid.dim
    ks = [_wavenumber(grid, m) for m in mode]
    xs = grid.coordinates()
    cosines = [np.cos(k * x) for k, x in zip(ks, xs)]
    phi = np.prod(cosines, axis=0)
    grad_phi = []
    for i, (k, x) in enumerate(zip(ks, xs)):
        others = np.prod([c for j, c in enumerate(cosines) if j != i], axis=0) if grid.dim > 1 else 1.0
        grad_phi.append(-k * np.sin(k * x) * others)
    lap_phi = -sum(k * k for k in ks) * phi
    horizon = theta.horizon
    times = theta.times
    profile = (1.0 - times / horizon) ** 2
    slope = -2.0 * (1.0 - times / horizon) / horizon
    th = to_physical(theta.field).values
    uv = to_physical(u.field).values
    transport = sum(uv[i] * grad_phi[i] for i in range(grid.dim))
    axes = grid.spatial_axes
    integrand = (slope * np.sum(th * phi, axis=axes)
                 + profile * np.sum(th * (eps * lap_phi + transport), axis=axes)) * grid.cell_volume
    initial = float(np.sum(_as_physical_values(theta0) * phi) * grid.cell_volume)
    total = trapezoid(integrand, times) + initial
    scale = abs(initial) + trapezoid(np.abs(integrand), times)
    return abs(total) / scale if scale > 0 else 0.0


def _as_physical_values(field):
    return field.values if isinstance(field, PhysicalField) else to_physical(field).values


def delta_theta_identity_residual(state_prev, state, state_next, eps):
    """
    dtheta = theta_{n+1} - theta_n against
    -int_0^t div e^{eps (t-s) Lap}(dtheta u_n + theta_n (u_n - u_{n-1})) ds.
    """
    dtheta = state_next.theta - state.theta
    du = state.u - state_prev.u
    flux = multiply(dtheta.field, state.u.field) + multiply(state.theta.field, du.field)
    conv = exponential_convolution(dtheta.with_field(flux), "div", diffusivity=eps)
    scale = float(np.max(np.atleast_1d(spectral_l2_norm(dtheta.field))))
    if scale == 0:
        return 0.0
    residual = float(np.max(np.atleast_1d(spectral_l2_norm((dtheta + conv).field))))
    return residual / scale
