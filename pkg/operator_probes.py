"""
Empirical operator-norm probes for the Duhamel operators, the Riesz potential
and the lambda-damped operators.

Every probe runs a seeded ensemble of forcings on a coarse (N, M) and a
refined (2N, 2M) space-time grid. The reported ratio is the ensemble maximum
of output norm over input norm; "bounded" means finite and stable under the
refinement, never a certified constant.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from duhamel import (DampedExponents, DampingWeight, duhamel_damped, duhamel_weighted,
                     exponential_convolution)
from exponents import (WeightExponents, exponent_family, gradient_gain_exponent, plain_gain_exponent,
                       require_admissible, sobolev_exponent)
from field_core import lp_norm, make_grid, random_band_limited, resample
from harmonic_ops import riesz_potential
from suite_errors import DomainError
from timeline import SpaceTimeNormSpec, Timeline, graded_times, spacetime_norm

logger = logging.getLogger(__name__)

ENSEMBLE_SIZE = 32
FORCING_BAND = 3
DAMPING_LAMBDAS = (1.0, 2.0, 4.0, 8.0, 16.0)
DAMPING_INTEGRAND_MEAN = 25.0
SLOPE_TOLERANCE = 0.1
REFINEMENT_TOLERANCE = 0.1


def probe_workers():
    try:
        return max(1, int(os.getenv("BOUSSINESQ_PROBE_WORKERS", "1")))
    except ValueError:
        return 1


def _map_members(fn, items):
    """Ordered map over ensemble members, threaded when more than one worker is configured."""
    workers = probe_workers()
    if workers == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ------------------------
# Forcing ensembles
# ------------------------

TIME_PROFILES = {
    "constant": lambda t, T: np.ones_like(t),
    "decay": lambda t, T: np.exp(-2.0 * t / T),
    "ramp": lambda t, T: t / T,
    "pulse": lambda t, T: np.sin(np.pi * t / T) ** 2,
    "oscillating": lambda t, T: np.cos(3.0 * np.pi * t / T),
}


@dataclass(frozen=True)
class ProbeLevel:
    dim: int
    n_per_axis: int
    intervals: int
    horizon: float = 1.0
    box_length: float = 2.0 * np.pi

    def refined(self):
        return ProbeLevel(self.dim, 2 * self.n_per_axis, 2 * self.intervals, self.horizon, self.box_length)

    @property
    def grid(self):
        return make_grid(self.dim, self.n_per_axis, self.box_length)

    @property
    def times(self):
        return graded_times(self.horizon, self.intervals)

    def label(self):
        return f"d={self.dim} N={self.n_per_axis} M={self.intervals}"


@dataclass(frozen=True, eq=False)
class ForcingMember:
    """Low-mode spatial content times an analytic time profile; resolution independent."""

    snapshot: object
    profile: str
    sign: float

    def on(self, level):
        spatial = resample(self.snapshot, level.n_per_axis) if level.n_per_axis != self.snapshot.grid.n_per_axis \
            else self.snapshot
        fn = TIME_PROFILES[self.profile]
        return Timeline.from_profile(spatial, level.times, lambda t: self.sign * fn(t, level.horizon))


def forcing_ensemble(level, seed, size=ENSEMBLE_SIZE, rank=0):
    rng = np.random.default_rng(seed)
    names = sorted(TIME_PROFILES)
    members = []
    for i in range(size):
        snapshot = random_band_limited(level.grid, rng, rank=rank, band=FORCING_BAND)
        sign = 1.0 if rng.random() < 0.5 else -1.0
        members.append(ForcingMember(snapshot, names[i % len(names)], sign))
    return members


# ------------------------
# Probe cases
# ------------------------

@dataclass(frozen=True)
class ProbeCase:
    name: str
    kind: str
    in_spec: Optional[SpaceTimeNormSpec]
    out_spec: Optional[SpaceTimeNormSpec]
    dim: int
    static_exponents: Optional[tuple] = None
    weights: Optional[WeightExponents] = None

    def exponents_label(self):
        if self.static_exponents:
            p, q = self.static_exponents
            return f"L^{p:.6g}_x -> L^{q:.6g}_x"
        return f"{self.in_spec.label()} -> {self.out_spec.label()}"


def plain_cases(d, p, r):
    """Unweighted probes: maximal regularity, Sobolev and the two gain relations."""
    require_admissible(d, p, r, "theorem1")
    fam = exponent_family(d, p, r, "theorem1")
    cases = [
        ProbeCase("A maximal regularity L2L2", "A", SpaceTimeNormSpec(2, 2), SpaceTimeNormSpec(2, 2), d),
        ProbeCase("A maximal regularity", "A", SpaceTimeNormSpec(r, fam.q_grad_r),
                  SpaceTimeNormSpec(r, fam.q_grad_r), d),
        ProbeCase("B sobolev", "B", SpaceTimeNormSpec(r, p), SpaceTimeNormSpec(r, sobolev_exponent(d, p)), d),
        ProbeCase("B gradient gain", "B", SpaceTimeNormSpec(r, p),
                  SpaceTimeNormSpec(2 * r, gradient_gain_exponent(d, p, r)), d),
        ProbeCase("C plain gain", "C", SpaceTimeNormSpec(r, p),
                  SpaceTimeNormSpec(2 * r, plain_gain_exponent(d, p, r)), d),
        ProbeCase("riesz potential", "riesz", None, None, d, (p, sobolev_exponent(d, p))),
    ]
    return cases


def weighted_cases(d, p, r):
    """Time-weighted probes over the weighted-regime exponent family."""
    require_admissible(d, p, r, "theorem2")
    fam = exponent_family(d, p, r, "theorem2")
    w = fam.weights
    rho = 2 * r
    return [
        ProbeCase("C weighted", "C", SpaceTimeNormSpec(rho, p, w.alpha), SpaceTimeNormSpec(rho, fam.p3, w.gamma1), d,
                  weights=w),
        ProbeCase("B weighted from alpha", "B", SpaceTimeNormSpec(rho, p, w.alpha),
                  SpaceTimeNormSpec(rho, fam.p2, w.beta), d, weights=w),
        ProbeCase("B weighted from beta", "B", SpaceTimeNormSpec(rho, fam.p2, w.beta),
                  SpaceTimeNormSpec(rho, fam.p3, w.gamma1), d, weights=w),
        ProbeCase("A weighted", "A", SpaceTimeNormSpec(rho, p, w.alpha), SpaceTimeNormSpec(rho, p, w.alpha), d,
                  weights=w),
    ]


def _member_ratio(case, level, member):
    if case.kind == "riesz":
        p, q = case.static_exponents
        field = resample(member.snapshot, level.n_per_axis) \
            if level.n_per_axis != member.snapshot.grid.n_per_axis else member.snapshot
        source = lp_norm(field, p)
        return lp_norm(riesz_potential(field), q) / source if source > 0 else 0.0
    f = member.on(level)
    if case.in_spec.weight_exponent > 0 or case.out_spec.weight_exponent > 0:
        return duhamel_weighted(case.kind, f, case.weights, case.in_spec, case.out_spec).ratio
    source = spacetime_norm(f, case.in_spec)
    if source == 0:
        return 0.0
    return spacetime_norm(exponential_convolution(f, case.kind), case.out_spec) / source


def ensemble_ratio(case, level, members):
    ratios = _map_members(lambda m: _member_ratio(case, level, m), members)
    return float(np.max(ratios))


def run_probe(case, level, seed, size=ENSEMBLE_SIZE):
    if case.dim != level.dim:
        raise DomainError(f"probe {case.name!r} is for d={case.dim}, level has d={level.dim}")
    members = forcing_ensemble(level, seed, size)
    coarse = ensemble_ratio(case, level, members)
    fine = ensemble_ratio(case, level.refined(), members)
    refinement = fine / coarse if coarse > 0 else 1.0
    logger.info("probe %-26s ratio=%.4g refined=%.4g (x%.3f)", case.name, coarse, fine, refinement)
    return {
        "operator": case.name,
        "exponents": case.exponents_label(),
        "grid": level.label(),
        "ensemble_size": size,
        "ratio": coarse,
        "refined_ratio": fine,
        "refinement_ratio": refinement,
        "stable": bool(abs(refinement - 1.0) < REFINEMENT_TOLERANCE),
    }


# ------------------------
# Damping slopes
# ------------------------

@dataclass(frozen=True)
class DampingCase:
    kind: str
    shape: str
    r: float
    exponents: DampedExponents
    weight_terms: tuple

    @property
    def slope_bound(self):
        return -1.0 / (4 * self.r) if self.shape == "plain" else -1.0 / (2 * self.r)


def plain_damping_cases(d, r):
    q1 = d * r / (r - 1.0)
    q2 = d * r / (2.0 * r - 1.0)
    v_spec, w_spec = SpaceTimeNormSpec(2 * r, q1), SpaceTimeNormSpec(2 * r, q2)
    terms = ((q1, 0.0),)
    return [
        DampingCase("C", "plain", r, DampedExponents((SpaceTimeNormSpec(2 * r, q1),), v_spec, w_spec), terms),
        DampingCase("B", "plain", r, DampedExponents((SpaceTimeNormSpec(2 * r, q2),), v_spec, w_spec), terms),
    ]


def weighted_damping_cases(d, p, r):
    fam = exponent_family(d, p, r, "theorem2")
    w = fam.weights
    v_spec = SpaceTimeNormSpec(2 * r, fam.p3, w.gamma1)
    w_spec = SpaceTimeNormSpec(2 * r, fam.p2, w.beta)
    terms = ((fam.p3, w.gamma1), (fam.p2, w.beta))
    c_out = (SpaceTimeNormSpec(2 * r, fam.p3, w.gamma1), SpaceTimeNormSpec(np.inf, fam.p3, w.gamma2))
    b_out = (SpaceTimeNormSpec(2 * r, fam.p2, w.beta),)
    return [
        DampingCase("C", "weighted", r, DampedExponents(c_out, v_spec, w_spec, "weighted"), terms),
        DampingCase("B", "weighted", r, DampedExponents(b_out, v_spec, w_spec, "weighted"), terms),
    ]


def _normalized_pair(case, v, omega):
    """Scale v (and omega in the weighted shape) so the damping integrand averages DAMPING_INTEGRAND_MEAN."""
    two_r = 2 * case.r
    tls = (v, omega)
    integrand = np.zeros(len(v))
    for tl, (q, a) in zip(tls, case.weight_terms):
        integrand = integrand + (v.times ** a * tl.node_norms(q)) ** two_r
    mean = float(np.mean(integrand))
    if mean == 0:
        return v, omega
    scale = (DAMPING_INTEGRAND_MEAN / mean) ** (1.0 / two_r)
    if len(case.weight_terms) == 1:
        return v * scale, omega
    return v * scale, omega * scale


def damping_outputs(case, v, omega, lambdas=DAMPING_LAMBDAS):
    v, omega = _normalized_pair(case, v, omega)
    terms = [(tl, q, a) for tl, (q, a) in zip((v, omega), case.weight_terms)]
    outputs = []
    for lam in lambdas:
        weight = DampingWeight.build(lam, case.r, terms)
        outputs.append(duhamel_damped(case.kind, v, omega, weight, case.exponents))
    return outputs


def fit_slope(lambdas, values):
    values = np.asarray(values, dtype=float)
    if np.any(values <= 0):
        return float("-inf")
    return float(np.polyfit(np.log(lambdas), np.log(values), 1)[0])


def run_damping_probe(case, level, seed, size=ENSEMBLE_SIZE, lambdas=DAMPING_LAMBDAS):
    members = forcing_ensemble(level, seed, 2 * size)
    pairs = [(members[2 * i].on(level), members[2 * i + 1].on(level)) for i in range(size)]
    results = _map_members(lambda pair: damping_outputs(case, pair[0], pair[1], lambdas), pairs)
    norms = np.array([[res.output_norm for res in member] for member in results])
    slopes = [fit_slope(lambdas, row) for row in norms]
    monotone = bool(np.all(np.diff(norms, axis=1) <= 1e-12 * np.max(norms, axis=1, keepdims=True)))
    worst = float(np.max(slopes))
    logger.info("damping %s/%s worst slope %.4f (bound %.4f)", case.kind, case.shape, worst, case.slope_bound)
    return {
        "operator": f"{case.kind} damped",
        "shape": case.shape,
        "grid": level.label(),
        "ensemble_size": size,
        "lambdas": " ".join(f"{lam:g}" for lam in lambdas),
        "slope": worst,
        "mean_slope": float(np.mean(slopes)),
        "slope_bound": case.slope_bound,
        "monotone": monotone,
        "within_bound": bool(worst <= case.slope_bound + SLOPE_TOLERANCE),
    }


# ------------------------
# Full sweep
# ------------------------

def verify_operators(plain_tuple, weighted_tuple, plain_level, weighted_level, seed,
                     size=ENSEMBLE_SIZE, include_weighted=True):
    """
    Run every probe. Returns (probe_rows, damping_rows), both lists of dicts
    in a fixed order so repeated runs produce identical tables.
    """
    d, p, r = plain_tuple
    rows = [run_probe(case, plain_level, seed, size) for case in plain_cases(d, p, r)]
    damping = [run_damping_probe(case, plain_level, seed, size) for case in plain_damping_cases(d, r)]
    if include_weighted:
        wd, wp, wr = weighted_tuple
        rows += [run_probe(case, weighted_level, seed, size) for case in weighted_cases(wd, wp, wr)]
        damping += [run_damping_probe(case, weighted_level, seed, size)
                    for case in weighted_damping_cases(wd, wp, wr)]
    return rows, damping
