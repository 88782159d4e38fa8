"""
Duhamel operators against the heat semigroup.

  C f(t) = int_0^t e^{(t-s) Lap} f(s) ds
  B f(t) = int_0^t grad e^{(t-s) Lap} f(s) ds
  A f(t) = int_0^t Lap e^{(t-s) Lap} f(s) ds
  D F(t) = int_0^t div e^{(t-s) Lap} F(s) ds      (matrix F)

plus the time-weighted norms and the lambda-damped variants in which the
integrand carries h(s, t) = exp(-lambda (H(t) - H(s))).

Quadrature is a per-mode exponential integrator: the factor exp(-c (t - s))
is integrated exactly against the forcing interpolated linearly between
nodes. A damping weight whose H is linear on each interval is the extra
decay rate lambda * dH / dt on that interval, so the damped operators share
the same recursion.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import cumulative_trapezoid

from field_core import SpectralField, multiply
from exponents import WeightExponents
from suite_errors import DomainError, ExponentError
from timeline import SpaceTimeNormSpec, Timeline, spacetime_norm

logger = logging.getLogger(__name__)

KINDS = ("A", "B", "C", "div")
SERIES_THRESHOLD = 1e-2
WEIGHT_ATOL = 1e-12


# ------------------------
# Exponential integrator weights
# ------------------------

def phi_weights(z):
    """
    (phi1 - phi2, phi2) at z = -c h with phi1 = (e^z - 1)/z and
    phi2 = (e^z - 1 - z)/z^2; series near 0.
    """
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < SERIES_THRESHOLD
    zs = np.where(small, 1.0, z)
    phi1 = np.where(small, 1.0 + z / 2 + z ** 2 / 6 + z ** 3 / 24, np.expm1(zs) / zs)
    phi2 = np.where(small, 0.5 + z / 6 + z ** 2 / 24 + z ** 3 / 120, (np.expm1(zs) - zs) / zs ** 2)
    return phi1 - phi2, phi2


@lru_cache(maxsize=16)
def _interval_coefficients(grid, times_key, diffusivity, rates_key):
    """Per-interval (decay, w_left, w_right), each of shape (M,) + grid.shape."""
    times = np.asarray(times_key)
    steps = np.diff(times)
    rates = np.zeros_like(steps) if rates_key is None else np.asarray(rates_key)
    kappa = diffusivity * grid.k_squared
    c = kappa[None] + rates.reshape((-1,) + (1,) * grid.dim)
    h = steps.reshape((-1,) + (1,) * grid.dim)
    z = -c * h
    left, right = phi_weights(z)
    decay = np.exp(z)
    for arr in (decay, left, right):
        arr.flags.writeable = False
    return decay, h * left, h * right


def _partial_coefficients(grid, tau, diffusivity, rate):
    z = -(diffusivity * grid.k_squared + rate) * tau
    left, right = phi_weights(z)
    return np.exp(z), tau * left, tau * right


def _apply_kind(coeffs, rank, grid, kind, diffusivity):
    """Spatial multiplier of the operator kind applied to a heat-convolved array."""
    if kind == "C":
        return coeffs, rank
    if kind == "A":
        return -diffusivity * grid.k_squared * coeffs, rank
    if kind == "B":
        return np.stack([1j * grid.k_odd[j] * coeffs for j in range(grid.dim)], axis=rank), rank + 1
    if kind == "div":
        if rank == 0:
            raise DomainError("div-type Duhamel needs a vector or matrix forcing")
        last = rank - 1
        return sum(1j * grid.k_odd[j] * np.take(coeffs, j, axis=last) for j in range(grid.dim)), rank - 1
    raise DomainError(f"operator kind must be one of {KINDS}, got {kind!r}")


def exponential_convolution(f, kind="C", diffusivity=1.0, extra_rates=None):
    """The operator of ``kind`` applied to f at every node of its time line."""
    grid, rank = f.grid, f.rank
    key_rates = None if extra_rates is None else tuple(float(x) for x in extra_rates)
    decay, wl, wr = _interval_coefficients(grid, tuple(f.times.tolist()), float(diffusivity), key_rates)
    out = np.empty_like(f.coeffs)
    current = np.zeros_like(f.node_array(0))
    out[f._index(0)] = current
    for n in range(1, len(f)):
        current = decay[n - 1] * current + wl[n - 1] * f.node_array(n - 1) + wr[n - 1] * f.node_array(n)
        out[f._index(n)] = current
    coeffs, out_rank = _apply_kind(out, rank, grid, kind, diffusivity)
    return f.with_field(SpectralField(grid, coeffs, out_rank))


def _convolution_at(f, t, kind, diffusivity=1.0, extra_rates=None):
    n, tau = f.locate(t)
    full = exponential_convolution(f, "C", diffusivity, extra_rates)
    if tau == 0 or n == len(f) - 1:
        base = full.node_array(n)
    else:
        rate = 0.0 if extra_rates is None else float(extra_rates[n])
        decay, wl, wr = _partial_coefficients(f.grid, tau, diffusivity, rate)
        base = decay * full.node_array(n) + wl * f.node_array(n) + wr * f.interpolate(t).coeffs
    coeffs, rank = _apply_kind(base, f.rank, f.grid, kind, diffusivity)
    return SpectralField(f.grid, coeffs, rank)


def duhamel_C(f, t):
    return _convolution_at(f, t, "C")


def duhamel_B(f, t):
    return _convolution_at(f, t, "B")


def duhamel_A(f, t):
    return _convolution_at(f, t, "A")


def duhamel_div(f, t):
    return _convolution_at(f, t, "div")


# ------------------------
# Damping weight
# ------------------------

@dataclass(frozen=True, eq=False)
class DampingWeight:
    """h(s, t) = exp(-lambda (H(t) - H(s))) with H cumulative on the nodes."""

    lambda_: float
    exponent_2r: float
    times: np.ndarray
    cumulative: np.ndarray

    def __post_init__(self):
        if self.lambda_ < 0:
            raise DomainError(f"damping needs lambda >= 0, got {self.lambda_}")
        if np.any(np.diff(self.cumulative) < 0):
            raise DomainError("cumulative damping integrand must be non-decreasing")

    @classmethod
    def build(cls, lambda_, r, terms):
        """
        ``terms`` is a list of (Timeline, q, a); the integrand at each node is
        the sum of (t^a ||f(t)||_q)^(2r).
        """
        first = terms[0][0]
        times = first.times
        integrand = np.zeros(times.size)
        for tl, q, a in terms:
            tl.same_nodes(first)
            weight = times ** a if a > 0 else 1.0
            integrand = integrand + (weight * tl.node_norms(q)) ** (2 * r)
        cumulative = cumulative_trapezoid(integrand, times, initial=0.0)
        return cls(float(lambda_), 2.0 * r, times, cumulative)

    @classmethod
    def none(cls, times):
        return cls(0.0, 2.0, np.asarray(times, float), np.zeros(len(times)))

    def h(self, s_index, t_index):
        return float(np.exp(-self.lambda_ * (self.cumulative[t_index] - self.cumulative[s_index])))

    def from_origin(self):
        return np.exp(-self.lambda_ * self.cumulative)

    def interval_rates(self):
        return self.lambda_ * np.diff(self.cumulative) / np.diff(self.times)

    def damp(self, tl):
        """Multiply a time line node-wise by h(0, t)."""
        w = self.from_origin()
        shape = (1,) * tl.rank + (w.size,) + (1,) * tl.grid.dim
        return tl.with_field(tl.field.with_coeffs(tl.coeffs * w.reshape(shape)))


def damped_convolution(f, kind, weight, diffusivity=1.0):
    if weight.lambda_ == 0:
        return exponential_convolution(f, kind, diffusivity)
    return exponential_convolution(f, kind, diffusivity, weight.interval_rates())


# ------------------------
# Weighted and damped norm probes
# ------------------------

@dataclass(frozen=True)
class WeightedProbe:
    kind: str
    input_norm: float
    output_norm: float
    ratio: float
    weighted_output: np.ndarray


def duhamel_weighted(kind, f, weights, in_exp, out_exp):
    """
    Weighted output and input norms of the operator ``kind`` applied to f.

    ``weights`` is the WeightExponents family both specs are drawn from;
    it is checked by ``check_weights`` before anything is computed.
    """
    if kind not in ("A", "B", "C"):
        raise DomainError(f"weighted probes take A, B or C, got {kind!r}")
    if not isinstance(in_exp, SpaceTimeNormSpec) or not isinstance(out_exp, SpaceTimeNormSpec):
        raise DomainError("in_exp and out_exp must be SpaceTimeNormSpec instances")
    check_weights(weights, in_exp, out_exp)
    out = exponential_convolution(f, kind)
    input_norm = spacetime_norm(f, in_exp)
    output_norm = spacetime_norm(out, out_exp)
    weighted = out.times ** out_exp.weight_exponent * out.node_norms(out_exp.space_exponent)
    ratio = output_norm / input_norm if input_norm > 0 else 0.0
    return WeightedProbe(kind, input_norm, output_norm, ratio, weighted)


def check_weights(weights, in_exp, out_exp):
    """alpha = beta + gamma1, gamma2 = gamma1 + 1/rho, and both specs weighted by a family member."""
    if not isinstance(weights, WeightExponents):
        raise DomainError(f"weighted norms need WeightExponents, got {type(weights).__name__}")
    if abs(weights.alpha - weights.beta - weights.gamma1) > WEIGHT_ATOL:
        raise ExponentError(f"alpha = beta + gamma1 fails: {weights.alpha:.6g} != "
                            f"{weights.beta:.6g} + {weights.gamma1:.6g}")
    step = 1.0 / in_exp.time_exponent
    if abs(weights.gamma2 - weights.gamma1 - step) > WEIGHT_ATOL:
        raise ExponentError(f"gamma2 = gamma1 + 1/rho fails for rho = {in_exp.time_exponent:.6g}: "
                            f"{weights.gamma2:.6g} != {weights.gamma1:.6g} + {step:.6g}")
    family = (weights.alpha, weights.beta, weights.gamma1, weights.gamma2)
    for side, spec in (("input", in_exp), ("output", out_exp)):
        if not any(abs(spec.weight_exponent - a) <= WEIGHT_ATOL for a in family):
            raise ExponentError(f"{side} weight t^{spec.weight_exponent:.6g} is not in the family "
                                f"({', '.join(f'{a:.6g}' for a in family)})")


@dataclass(frozen=True)
class DampedExponents:
    """Norms used by a damped probe; shape "plain" or "weighted" selects the bound."""

    output: tuple
    v: SpaceTimeNormSpec
    omega: SpaceTimeNormSpec
    shape: str = "plain"


@dataclass(frozen=True)
class DampedProbe:
    kind: str
    lambda_: float
    output_norm: float
    bound_side: float
    ratio: float


def duhamel_damped(kind, v, omega, weight, exponents):
    """
    ||op_lambda(v omega)|| next to the lambda-shaped bound side (without C_r):
    lambda^(-1/(4r)) ||v||^(1/2) ||omega|| for the plain shape and
    lambda^(-1/(2r)) ||omega|| for the weighted shape.
    """
    if kind not in ("B", "C"):
        raise DomainError(f"damped probes take B or C, got {kind!r}")
    if weight.lambda_ <= 0:
        raise DomainError(f"damped probes need lambda > 0, got {weight.lambda_}")
    product = Timeline(v.times, multiply(v.field, omega.field), v.grading)
    out = damped_convolution(product, kind, weight)
    output_norm = sum(spacetime_norm(out, spec) for spec in exponents.output)
    r = weight.exponent_2r / 2.0
    omega_norm = spacetime_norm(omega, exponents.omega)
    if exponents.shape == "plain":
        bound = weight.lambda_ ** (-1.0 / (4 * r)) * np.sqrt(spacetime_norm(v, exponents.v)) * omega_norm
    else:
        bound = weight.lambda_ ** (-1.0 / (2 * r)) * omega_norm
    ratio = output_norm / bound if bound > 0 else 0.0
    return DampedProbe(kind, weight.lambda_, float(output_norm), float(bound), float(ratio))
