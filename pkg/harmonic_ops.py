"""
Stationary harmonic-analysis operators: heat semigroup, closed-form heat
kernel norms, Riesz transforms, Leray projection and the Riesz potential.

All operators are Fourier multipliers on SpectralField coefficients and work
on batched (time-stacked) fields. The heat kernel uses the standard
normalization K(t, x) = (4 pi t)^(-d/2) exp(-|x|^2 / (4t)), so that e^{t Lap}
is the multiplier exp(-|k|^2 t).
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from field_core import SpectralField
from suite_errors import DomainError

logger = logging.getLogger(__name__)

ZERO_MODE_REL_TOL = 1e-12


# ------------------------
# Heat semigroup
# ------------------------

def heat_multiplier(grid, t, diffusivity=1.0):
    return np.exp(-diffusivity * grid.k_squared * t)


def heat_propagate(field, t, diffusivity=1.0):
    if t < 0:
        raise DomainError(f"heat_propagate needs t >= 0, got {t}")
    if t == 0:
        return field
    return field.with_coeffs(field.coeffs * heat_multiplier(field.grid, t, diffusivity))


# ------------------------
# Kernel norms
# ------------------------

@dataclass(frozen=True)
class KernelNormTable:
    """Base values ||K(1)||_q and ||Omega(1)||_q, Omega = grad K."""

    dim: int
    q: float
    kernel_base: float
    grad_base: float

    def kernel_norm(self, t):
        return self.kernel_base * t ** (-self.dim / (2.0 * _dual(self.q)))

    def grad_kernel_norm(self, t):
        return self.grad_base * t ** (-self.dim / (2.0 * _dual(self.q)) - 0.5)


def _dual(q):
    """Hoelder conjugate q' = q / (q - 1), with 1' = inf."""
    return np.inf if q == 1 else q / (q - 1.0)


def _check_kernel_args(q, d):
    if not 1 <= q < np.inf:
        raise DomainError(f"kernel norms need q in [1, inf), got {q}")
    if d < 1:
        raise DomainError(f"dimension must be positive, got {d}")


def kernel_norm_table(d, q):
    _check_kernel_args(q, d)
    # ||K(1)||_q = (4 pi)^(-d / (2 q')) q^(-d / (2 q))
    log_k = -(d / 2.0) * (1.0 - 1.0 / q) * np.log(4.0 * np.pi) - (d / (2.0 * q)) * np.log(q)
    # ||Omega(1)||_q^q = 2^-q (4 pi)^(-dq/2) pi^(d/2) Gamma((q+d)/2) / (Gamma(d/2) (q/4)^((q+d)/2))
    log_omega_q = (-q * np.log(2.0) - (d * q / 2.0) * np.log(4.0 * np.pi) + (d / 2.0) * np.log(np.pi)
                   + gammaln((q + d) / 2.0) - gammaln(d / 2.0) - ((q + d) / 2.0) * np.log(q / 4.0))
    return KernelNormTable(int(d), float(q), float(np.exp(log_k)), float(np.exp(log_omega_q / q)))


def heat_kernel_norm(t, q, d):
    if t <= 0:
        raise DomainError(f"heat_kernel_norm needs t > 0, got {t}")
    return kernel_norm_table(d, q).kernel_norm(t)


def grad_heat_kernel_norm(t, q, d):
    if t <= 0:
        raise DomainError(f"grad_heat_kernel_norm needs t > 0, got {t}")
    return kernel_norm_table(d, q).grad_kernel_norm(t)


# ------------------------
# Riesz operators
# ------------------------

def _safe_inverse(values):
    out = np.zeros_like(values)
    np.divide(1.0, values, out=out, where=values > 0)
    return out


def _riesz_symbol(grid, j):
    return -1j * grid.k_odd[j] * _safe_inverse(grid.k_abs)


def _expand(multiplier, field):
    """Reshape a (d, N, ..., N) multiplier so it broadcasts against a vector field with batch axes."""
    nbatch = len(field.batch_shape)
    return multiplier.reshape((multiplier.shape[0],) + (1,) * nbatch + multiplier.shape[1:])


def _log_zero_mode(field, what):
    zero = field.coeffs[(Ellipsis,) + field.grid.zero_mode]
    energy = np.sum(np.abs(field.coeffs) ** 2)
    if energy > 0 and np.sum(np.abs(zero) ** 2) > ZERO_MODE_REL_TOL * energy:
        logger.debug("%s: dropping nonzero mean mode", what)


def riesz_transform(field, j):
    if not 0 <= j < field.grid.dim:
        raise DomainError(f"riesz index {j} outside 0..{field.grid.dim - 1}")
    return field.with_coeffs(field.coeffs * _riesz_symbol(field.grid, j))


def riesz_divergence(field):
    """R . v = sum_j R_j v_j."""
    if field.rank != 1:
        raise DomainError("riesz_divergence needs a vector field")
    grid = field.grid
    out = sum(field.coeffs[j] * _riesz_symbol(grid, j) for j in range(grid.dim))
    return SpectralField(grid, out, 0)


def riesz_double_divergence(field):
    """R . R . A = sum_ij R_i R_j A_ij, multiplier -k_i k_j / |k|^2."""
    if field.rank != 2:
        raise DomainError("riesz_double_divergence needs a matrix field")
    grid = field.grid
    inv2 = _safe_inverse(grid.k_squared)
    out = sum(-grid.k_odd[i] * grid.k_odd[j] * inv2 * field.coeffs[i, j]
              for i in range(grid.dim) for j in range(grid.dim))
    return SpectralField(grid, out, 0)


def riesz_potential(field):
    """(sqrt(-Lap))^-1: multiplier 1/|k|, zero mode set to 0."""
    _log_zero_mode(field, "riesz_potential")
    return field.with_coeffs(field.coeffs * _safe_inverse(field.grid.k_abs))


# ------------------------
# Leray projection
# ------------------------

def leray_project(field):
    """P = I - k k^T / |k|^2 per wavevector; the zero mode passes through."""
    grid = field.grid
    if field.rank != 1:
        raise DomainError(f"leray_project needs {grid.dim} components, got {field.components}")
    k = grid.k_odd
    k_dot_v = np.sum(_expand(k, field) * field.coeffs, axis=0)
    inv2 = _safe_inverse(np.sum(k ** 2, axis=0))
    return field.with_coeffs(field.coeffs - _expand(k, field) * (k_dot_v * inv2))


def leray_complement(field):
    """(I - P) v, the gradient part of a vector field."""
    return field - leray_project(field)
