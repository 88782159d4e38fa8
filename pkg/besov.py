"""
Homogeneous Besov norms: Littlewood-Paley blocks on the grid lattice, the heat
flow characterization for negative regularity, and embedding ratios.
"""

import logging
import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import gammainc, gammaln

from field_core import SpectralField, lp_norm, random_band_limited
from suite_errors import DomainError

logger = logging.getLogger(__name__)

# Plateau of the cutoff chi: 1 below PLATEAU_LO, 0 above PLATEAU_HI.
PLATEAU_LO = 0.75
PLATEAU_HI = 4.0 / 3.0
HEAT_POINTS_PER_DECADE = 32


@dataclass(frozen=True)
class BesovIndex:
    p: float
    r: float
    s: float

    def __post_init__(self):
        if self.p < 1:
            raise DomainError(f"Besov index needs p >= 1, got {self.p}")
        if self.r < 1:
            raise DomainError(f"Besov index needs r >= 1, got {self.r}")

    @classmethod
    def critical(cls, d, p, r):
        return cls(p, r, d / p - 1.0)

    def require_heat(self):
        if not self.s < 0:
            raise DomainError(f"heat characterization needs s < 0, got s={self.s}")


def ladder_manifest():
    """Shape constants recorded in run manifests so norms can be reproduced."""
    return {"plateau": [PLATEAU_LO, PLATEAU_HI], "transition": "exp(-1/x) smooth step",
            "heat_points_per_decade": HEAT_POINTS_PER_DECADE}


# ------------------------
# Partition of unity
# ------------------------

def _smooth_step(x):
    x = np.clip(x, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


def cutoff(rho):
    """chi: smooth radial plateau, 1 on [0, 3/4], 0 on [4/3, inf)."""
    return 1.0 - _smooth_step((np.asarray(rho) - PLATEAU_LO) / (PLATEAU_HI - PLATEAU_LO))


def bump(rho):
    """phi(xi) = chi(xi/2) - chi(xi), supported in [3/4, 8/3]."""
    return cutoff(np.asarray(rho) / 2.0) - cutoff(rho)


@dataclass(frozen=True, eq=False)
class DyadicLadder:
    grid: object
    j_min: int
    j_max: int
    partition: dict = dc_field(repr=False)
    low_absorbed: bool = False
    high_absorbed: bool = False

    @property
    def indices(self):
        return range(self.j_min, self.j_max + 1)


@lru_cache(maxsize=32)
def build_ladder(grid):
    length = grid.box_length
    j_min = math.ceil(math.log2(2.0 * math.pi / length))
    j_max = math.floor(math.log2(math.pi * grid.n_per_axis / (3.0 * length)) + 1.0)
    k = grid.k_abs
    nonzero = k > 0
    partition = {}
    for j in range(j_min, j_max + 1):
        upper = cutoff(k / 2.0 ** (j + 1)) if j < j_max else np.ones_like(k)
        lower = cutoff(k / 2.0 ** j) if j > j_min else np.zeros_like(k)
        mult = np.where(nonzero, upper - lower, 0.0)
        mult.flags.writeable = False
        partition[j] = mult
    low = bool(np.any(nonzero & (k < PLATEAU_HI * 2.0 ** j_min)))
    high = bool(np.any(k > 2.0 * PLATEAU_LO * 2.0 ** j_max))
    if low or high:
        logger.debug("ladder %d..%d absorbs tails (low=%s, high=%s)", j_min, j_max, low, high)
    return DyadicLadder(grid, j_min, j_max, partition, low, high)


def dyadic_block(field, j, ladder=None):
    ladder = ladder or build_ladder(field.grid)
    if j not in ladder.partition:
        raise DomainError(f"block {j} outside ladder range [{ladder.j_min}, {ladder.j_max}]")
    return field.with_coeffs(field.coeffs * ladder.partition[j])


def partial_dyadic_sum(field, n, ladder=None):
    """Sum of blocks with |j| <= n; the zero mode is not part of any block."""
    ladder = ladder or build_ladder(field.grid)
    if n < 0:
        raise DomainError(f"truncation level must be non-negative, got {n}")
    selected = [j for j in ladder.indices if abs(j) <= n]
    if not selected:
        raise DomainError(f"level {n} selects no block of ladder [{ladder.j_min}, {ladder.j_max}]")
    mult = sum(ladder.partition[j] for j in selected)
    return field.with_coeffs(field.coeffs * mult)


# ------------------------
# Norms
# ------------------------

def _sequence_norm(values, r):
    values = np.asarray(values, dtype=float)
    if np.isinf(r):
        return float(np.max(values)) if values.size else 0.0
    return float(np.sum(values ** r) ** (1.0 / r))


def block_norms(field, p, ladder=None):
    ladder = ladder or build_ladder(field.grid)
    return {j: lp_norm(dyadic_block(field, j, ladder), p) for j in ladder.indices}


def besov_norm_dyadic(field, idx, ladder=None):
    norms = block_norms(field, idx.p, ladder)
    return _sequence_norm([2.0 ** (j * idx.s) * v for j, v in norms.items()], idx.r)


def heat_window(grid, points_per_decade=HEAT_POINTS_PER_DECADE):
    ladder = build_ladder(grid)
    t_lo = 0.5 * 2.0 ** (-2 * ladder.j_max)
    t_hi = 8.0 * 2.0 ** (-2 * ladder.j_min)
    count = int(math.ceil(math.log10(t_hi / t_lo) * points_per_decade)) + 1
    return np.geomspace(t_lo, t_hi, count)


def _heat_flow_norms(field, p, times):
    """||e^{t Lap} f||_p for every t in ``times``."""
    mult = np.exp(-np.multiply.outer(times, field.grid.k_squared))
    stacked = np.expand_dims(field.coeffs, axis=field.rank) * mult
    return np.atleast_1d(lp_norm(SpectralField(field.grid, stacked, field.rank), p))


def besov_norm_heat(field, idx, points_per_decade=HEAT_POINTS_PER_DECADE):
    idx.require_heat()
    times = heat_window(field.grid, points_per_decade)
    g = times ** (-idx.s / 2.0) * _heat_flow_norms(field, idx.p, times)
    if np.isinf(idx.r):
        return float(np.max(g))
    return float(trapezoid(g ** idx.r, np.log(times)) ** (1.0 / idx.r))


def heat_time_norm(field, p, r, points_per_decade=HEAT_POINTS_PER_DECADE):
    """||e^{t Lap} f||_{L^r_t L^p_x} over the heat window."""
    times = heat_window(field.grid, points_per_decade)
    g = _heat_flow_norms(field, p, times)
    if np.isinf(r):
        return float(np.max(g))
    return float(trapezoid(g ** r * times, np.log(times)) ** (1.0 / r))


def windowed_single_mode_heat_norm(amplitude_norm, k_squared, s, r, t_lo, t_hi):
    """Closed form of the heat-side integral for a single |k|^2 shell over [t_lo, t_hi]."""
    a = -s * r / 2.0
    if a <= 0:
        raise DomainError(f"closed form needs s < 0, got s={s}")
    rate = r * k_squared
    window = gammainc(a, rate * t_hi) - gammainc(a, rate * t_lo)
    value = amplitude_norm ** r * np.exp(gammaln(a) - a * np.log(rate)) * window
    return float(value ** (1.0 / r))


def heat_time_check(field, p, r):
    """Heat time norm against the heat-side Besov norm at s = -2/r and the dyadic norm."""
    idx = BesovIndex(p, r, -2.0 / r)
    time_norm = heat_time_norm(field, p, r)
    heat = besov_norm_heat(field, idx)
    dyadic = besov_norm_dyadic(field, idx)
    return {"s": idx.s, "time_norm": time_norm, "heat": heat, "dyadic": dyadic,
            "ratio": time_norm / dyadic if dyadic > 0 else 0.0}


def embedding_ratio(field, p1, r1, p2, r2, s):
    if p1 > p2:
        raise DomainError(f"embedding needs p1 <= p2, got {p1} > {p2}")
    if r1 > r2:
        raise DomainError(f"embedding needs r1 <= r2, got {r1} > {r2}")
    d = field.grid.dim
    source = besov_norm_dyadic(field, BesovIndex(p1, r1, s))
    if source == 0:
        return 0.0
    target = besov_norm_dyadic(field, BesovIndex(p2, r2, s - d * (1.0 / p1 - 1.0 / p2)))
    return target / source


# ------------------------
# Corpus and reports
# ------------------------

def random_corpus(grid, seed, size=20, max_band=None):
    """Seeded mean-zero band-limited fields with varying bands."""
    rng = np.random.default_rng(seed)
    top = max_band or max(2, grid.n_per_axis // 3 - 1)
    bands = rng.integers(1, top + 1, size=size)
    return [random_band_limited(grid, rng, band=int(b)) for b in bands]


def besov_report_row(field_id, field, p, r, s):
    idx = BesovIndex(p, r, s)
    dyadic = besov_norm_dyadic(field, idx)
    heat = besov_norm_heat(field, idx)
    return {"field_id": field_id, "p": p, "r": r, "s": s, "dyadic": dyadic, "heat": heat,
            "ratio": heat / dyadic if dyadic > 0 else 0.0}
