"""
Time lines of spectral fields on graded grids and space-time Lebesgue norms.

A Timeline stores one SpectralField whose first batch axis is time, so every
field_core and harmonic_ops operator applies to all nodes at once.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from exponents import dual
from field_core import SpectralField, lp_norm, zeros
from suite_errors import DomainError, ExponentError, GridMismatchError

logger = logging.getLogger(__name__)


# ------------------------
# Time grids
# ------------------------

def graded_times(horizon, intervals=32, grading=2.0):
    """
    Uniform nodes on (h, T] with the first interval [0, h] refined
    geometrically until t_1 <= T / M^2, M the total interval count.
    """
    if horizon <= 0:
        raise DomainError(f"horizon must be positive, got {horizon}")
    if intervals < 1:
        raise DomainError(f"need at least one interval, got {intervals}")
    if grading <= 1:
        raise DomainError(f"grading factor must exceed 1, got {grading}")
    h = horizon / intervals
    levels = 1
    while h / grading ** levels > horizon / (intervals + levels) ** 2:
        levels += 1
    graded = [h / grading ** k for k in range(levels, 0, -1)]
    uniform = [h * i for i in range(1, intervals + 1)]
    uniform[-1] = float(horizon)
    return np.array([0.0] + graded + uniform)


def _check_times(times):
    times = np.array(times, dtype=float)
    if times.ndim != 1 or times.size < 2:
        raise DomainError("a time line needs at least two nodes")
    if times[0] != 0.0:
        raise DomainError(f"first node must be 0, got {times[0]}")
    if np.any(np.diff(times) <= 0):
        raise DomainError("time nodes must be strictly increasing")
    return times


@dataclass(frozen=True, eq=False)
class Timeline:
    times: np.ndarray
    field: SpectralField
    grading: float = 2.0

    def __post_init__(self):
        times = _check_times(self.times)
        times.flags.writeable = False
        object.__setattr__(self, "times", times)
        if self.field.batch_shape != (times.size,):
            raise DomainError(f"field batch shape {self.field.batch_shape} does not match {times.size} nodes")

    # construction
    @classmethod
    def from_snapshots(cls, times, snapshots, grading=2.0):
        first = snapshots[0]
        coeffs = np.stack([s.coeffs for s in snapshots], axis=first.rank)
        return cls(np.asarray(times, float), SpectralField(first.grid, coeffs, first.rank), grading)

    @classmethod
    def zeros(cls, grid, times, rank=0, grading=2.0):
        return cls(np.asarray(times, float), zeros(grid, rank, (len(times),)), grading)

    @classmethod
    def constant(cls, snapshot, times, grading=2.0):
        coeffs = np.repeat(np.expand_dims(snapshot.coeffs, snapshot.rank), len(times), axis=snapshot.rank)
        return cls(np.asarray(times, float), snapshot.with_coeffs(coeffs), grading)

    @classmethod
    def from_profile(cls, snapshot, times, profile, grading=2.0):
        """snapshot(x) * profile(t) for a scalar time profile."""
        times = np.asarray(times, float)
        shape = (1,) * snapshot.rank + (times.size,) + (1,) * snapshot.grid.dim
        coeffs = np.expand_dims(snapshot.coeffs, snapshot.rank) * np.asarray(profile(times)).reshape(shape)
        return cls(times, snapshot.with_coeffs(coeffs), grading)

    # access
    @property
    def grid(self):
        return self.field.grid

    @property
    def rank(self):
        return self.field.rank

    @property
    def coeffs(self):
        return self.field.coeffs

    @property
    def horizon(self):
        return float(self.times[-1])

    @property
    def steps(self):
        return np.diff(self.times)

    def __len__(self):
        return self.times.size

    def _index(self, i):
        return (slice(None),) * self.rank + (i,)

    def snapshot(self, i):
        return SpectralField(self.grid, self.coeffs[self._index(i)], self.rank)

    def node_array(self, i):
        return self.coeffs[self._index(i)]

    def locate(self, t):
        """(n, tau): t lies in [t_n, t_{n+1}) with offset tau; the last node maps to (M, 0)."""
        if t < 0 or t > self.times[-1] * (1 + 1e-14):
            raise DomainError(f"t={t} outside timeline [0, {self.horizon}]")
        n = int(np.searchsorted(self.times, t, side="right") - 1)
        n = min(n, self.times.size - 1)
        return n, t - self.times[n]

    def interpolate(self, t):
        n, tau = self.locate(t)
        if tau == 0 or n == self.times.size - 1:
            return self.snapshot(n)
        w = tau / (self.times[n + 1] - self.times[n])
        return self.snapshot(n).with_coeffs((1 - w) * self.node_array(n) + w * self.node_array(n + 1))

    def with_field(self, field):
        return Timeline(self.times, field, self.grading)

    def map(self, fn):
        return self.with_field(fn(self.field))

    def same_nodes(self, other):
        if self.grid != other.grid or self.times.size != other.times.size or not np.array_equal(self.times, other.times):
            raise GridMismatchError("time lines live on different grids or nodes")

    def __add__(self, other):
        self.same_nodes(other)
        return self.with_field(self.field + other.field)

    def __sub__(self, other):
        self.same_nodes(other)
        return self.with_field(self.field - other.field)

    def __mul__(self, scalar):
        return self.with_field(self.field * scalar)

    __rmul__ = __mul__

    def node_norms(self, q):
        return np.atleast_1d(lp_norm(self.field, q))

    def component(self, *index):
        return self.with_field(self.field.component(*index))

    def is_finite(self):
        return self.field.is_finite()


# ------------------------
# Space-time norms
# ------------------------

@dataclass(frozen=True)
class SpaceTimeNormSpec:
    """||t^a f||_{L^rho(0, T; L^q)}; ``horizon`` None means the whole time line."""

    time_exponent: float
    space_exponent: float
    weight_exponent: float = 0.0
    horizon: Optional[float] = None

    def __post_init__(self):
        if self.time_exponent < 1:
            raise ExponentError(f"rho >= 1 violated: rho={self.time_exponent}")
        if self.space_exponent < 1:
            raise ExponentError(f"q >= 1 violated: q={self.space_exponent}")
        if self.weight_exponent < 0:
            raise ExponentError(f"a >= 0 violated: a={self.weight_exponent}")
        if self.weight_exponent > 0 and np.isfinite(self.time_exponent):
            value = self.weight_exponent * dual(self.time_exponent)
            if not value < 1:
                raise ExponentError(f"a*rho' < 1 violated: a*rho'={value:.6g}")

    def label(self):
        rho = "inf" if np.isinf(self.time_exponent) else f"{self.time_exponent:.6g}"
        q = "inf" if np.isinf(self.space_exponent) else f"{self.space_exponent:.6g}"
        return f"t^{self.weight_exponent:.6g} L^{rho}_t L^{q}_x"


def interval_weights(times, b):
    """
    Product-integration weights for int t^b g(t) dt with g linear between
    nodes. Returns (w_left, w_right) per interval.
    """
    t0, t1 = times[:-1], times[1:]
    h = t1 - t0
    if b == 0:
        return 0.5 * h, 0.5 * h
    s1 = (t1 ** (b + 1) - t0 ** (b + 1)) / (b + 1)
    s2 = (t1 ** (b + 2) - t0 ** (b + 2)) / (b + 2)
    return (t1 * s1 - s2) / h, (s2 - t0 * s1) / h


def _window(times, values, horizon):
    if horizon is None:
        return times, values
    keep = times <= horizon * (1 + 1e-14)
    return times[keep], values[..., keep]


def time_norm(times, values, rho, weight=0.0):
    """||t^weight g||_{L^rho(0, T)} of nodal values g >= 0."""
    values = np.abs(np.asarray(values, dtype=float))
    if np.isinf(rho):
        return float(np.max(times ** weight * values)) if weight > 0 else float(np.max(values))
    wl, wr = interval_weights(times, weight * rho)
    g = values ** rho
    return float(np.sum(wl * g[:-1] + wr * g[1:]) ** (1.0 / rho))


def cumulative_time_norm(times, values, rho, weight=0.0):
    """Norm over [0, t_i] for every node i."""
    values = np.abs(np.asarray(values, dtype=float))
    if np.isinf(rho):
        scaled = times ** weight * values if weight > 0 else values
        return np.maximum.accumulate(scaled)
    wl, wr = interval_weights(times, weight * rho)
    g = values ** rho
    return np.concatenate([[0.0], np.cumsum(wl * g[:-1] + wr * g[1:])]) ** (1.0 / rho)


def spacetime_norm(f, spec):
    times, norms = _window(f.times, f.node_norms(spec.space_exponent), spec.horizon)
    return time_norm(times, norms, spec.time_exponent, spec.weight_exponent)


def cumulative_spacetime_norm(f, spec):
    norms = f.node_norms(spec.space_exponent)
    return cumulative_time_norm(f.times, norms, spec.time_exponent, spec.weight_exponent)
