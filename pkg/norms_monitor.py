"""
Norm monitoring for solver runs.

Turns solver states into the norms of the two regime displays, infers the
minimal constants that make each display hold for a run, measures the damped
increments between Picard iterates, and aggregates constants across runs.
"""

import json
import logging
from dataclasses import dataclass, field as dc_field

import numpy as np

from duhamel import DampingWeight
from exponents import check_regime, damping_exponents, exponent_family
from field_core import gradient, horizontal_part, lp_norm, vertical_part
from suite_errors import ExponentError
from timeline import SpaceTimeNormSpec, cumulative_spacetime_norm, spacetime_norm, time_norm

logger = logging.getLogger(__name__)


def _grad(tl):
    return tl.map(gradient)


def _horizontal(tl):
    return tl.map(horizontal_part)


def _vertical(tl):
    return tl.map(vertical_part)


def y_norm(u, r):
    """||u||_{L^{2r}L^{dr/(r-1)}} + ||grad u||_{L^{2r}L^{dr/(2r-1)}}, the inner-loop norm."""
    d = u.grid.dim
    return (spacetime_norm(u, SpaceTimeNormSpec(2 * r, d * r / (r - 1.0)))
            + spacetime_norm(_grad(u), SpaceTimeNormSpec(2 * r, d * r / (2.0 * r - 1.0))))


# ------------------------
# Display norms
# ------------------------

def _velocity_norms(u, fam):
    r = fam.r
    grad = _grad(u)
    if fam.regime == "theorem1":
        specs = [
            ("grad L^2r L^dr/(2r-1)", grad, SpaceTimeNormSpec(2 * r, fam.q_grad)),
            ("grad L^r L^dr/(2(r-1))", grad, SpaceTimeNormSpec(r, fam.q_grad_r)),
            ("L^2r L^dr/(r-1)", u, SpaceTimeNormSpec(2 * r, fam.q_u)),
        ]
    else:
        w = fam.weights
        specs = [
            ("t^alpha grad L^2r L^p*", grad, SpaceTimeNormSpec(2 * r, fam.p_star, w.alpha)),
            ("t^beta grad L^2r L^p2", grad, SpaceTimeNormSpec(2 * r, fam.p2, w.beta)),
            ("t^gamma1 L^2r L^p3", u, SpaceTimeNormSpec(2 * r, fam.p3, w.gamma1)),
            ("t^gamma2 L^inf L^p3", u, SpaceTimeNormSpec(np.inf, fam.p3, w.gamma2)),
        ]
    return {label: spacetime_norm(tl, spec) for label, tl, spec in specs}


def _pressure_norm(pi, fam):
    if fam.regime == "theorem1":
        return {"L^r L^dr/(2(r-1))": spacetime_norm(pi, SpaceTimeNormSpec(fam.r, fam.q_grad_r))}
    return {"t^alpha L^r L^p*": spacetime_norm(pi, SpaceTimeNormSpec(fam.r, fam.p_star, fam.weights.alpha))}


def display_norms(state, fam):
    """Every left-hand norm of the regime display for one state."""
    theta_sup = float(np.max(np.atleast_1d(lp_norm(state.theta.field, np.inf))))
    return {
        "horizontal": _velocity_norms(_horizontal(state.u), fam),
        "vertical": _velocity_norms(_vertical(state.u), fam),
        "pressure": _pressure_norm(state.pi, fam),
        "temperature": {"L^inf_t,x": theta_sup},
    }


# ------------------------
# Inequality reports
# ------------------------

@dataclass
class InequalityReport:
    name: str
    lhs_parts: dict
    lhs: float
    rhs_shape: str
    rhs_scale: float
    inferred_constant: float
    regime: str
    status: str = "converged"

    def as_row(self, run_id):
        return {
            "run_id": run_id,
            "inequality": self.name,
            "regime": self.regime,
            "lhs": self.lhs,
            "rhs_shape": self.rhs_shape,
            "rhs_scale": self.rhs_scale,
            "inferred_constant": self.inferred_constant,
            "status": self.status,
            "parts": json.dumps(self.lhs_parts, sort_keys=True),
        }


def infer_constant(lhs, scale):
    if lhs == 0:
        return 0.0
    return lhs / scale if scale > 0 else float("inf")


def _report(name, parts, rhs_shape, scale, regime, status):
    lhs = float(sum(parts.values()))
    return InequalityReport(name, parts, lhs, rhs_shape, float(scale), infer_constant(lhs, scale), regime, status)


def theorem_report(states, regime, eta_report, status="converged"):
    """
    Reports for the final state of a run plus the iterate-uniform horizontal
    bound over every state supplied. Diverged runs are reported and tagged.
    """
    check_regime(regime)
    final = states[-1]
    fam = exponent_family(final.u.grid.dim, eta_report.p, eta_report.r, regime)
    try:
        norms = display_norms(final, fam)
    except ExponentError as exc:
        logger.warning("display norms not integrable for this tuple: %s", exc)
        return []
    eta_value = eta_report.eta
    theta_bar = float(lp_norm(final.theta.snapshot(0), np.inf))
    reports = [
        _report("horizontal", norms["horizontal"], "C1*eta", eta_value, regime, status),
        _report("vertical", norms["vertical"], "C2*|u0^d|", eta_report.ud_besov, regime, status),
        _report("pressure", norms["pressure"], "C4*eta", eta_value, regime, status),
        _report("temperature", norms["temperature"], "|theta0|_inf", theta_bar, regime, status),
    ]
    uniform = max(sum(_velocity_norms(_horizontal(s.u), fam).values()) for s in states)
    reports.append(_report("horizontal iterate-uniform", {"max over iterates": float(uniform)},
                           "C1*eta", eta_value, regime, status))
    return reports


def ledger_rows(run_id, reports, eta_report=None):
    rows = [rep.as_row(run_id) for rep in reports]
    if eta_report is not None:
        for row in rows:
            row["eta"] = eta_report.eta
            row["ud_besov"] = eta_report.ud_besov
    return rows


# ------------------------
# Increments between iterates
# ------------------------

@dataclass
class DeltaU:
    value: float
    parts: dict
    profile: np.ndarray = dc_field(repr=False)
    lambda_: float = 0.0


def damping_weight(u, lambda_, regime, r, p=None):
    """h built from the vertical component of u and its gradient."""
    if lambda_ == 0:
        return DampingWeight.none(u.times)
    d = u.grid.dim
    ud = _vertical(u)
    if regime == "theorem1":
        terms = [(ud, d * r / (r - 1.0), 0.0), (_grad(ud), d * r / (2.0 * r - 1.0), 0.0)]
    else:
        fam = exponent_family(d, p, r, regime)
        terms = [(ud, fam.p3, fam.weights.gamma1), (_grad(ud), fam.p2, fam.weights.beta)]
    return DampingWeight.build(lambda_, r, terms)


def _delta_specs(d, p, r, regime, eps):
    if regime == "theorem1":
        q_star, q_grad_star = damping_exponents(d, r, eps)
        return [
            ("L^2r L^dr/(r-1)", False, SpaceTimeNormSpec(2 * r, d * r / (r - 1.0))),
            ("L^2r L^q*", False, SpaceTimeNormSpec(2 * r, q_star)),
            ("grad L^2r L^dr/(2r-1)", True, SpaceTimeNormSpec(2 * r, d * r / (2.0 * r - 1.0))),
            ("grad L^2r L^2dr/((4-eps)r-2)", True, SpaceTimeNormSpec(2 * r, q_grad_star)),
        ]
    fam = exponent_family(d, p, r, regime)
    w = fam.weights
    return [
        ("t^gamma1 L^2r L^p3", False, SpaceTimeNormSpec(2 * r, fam.p3, w.gamma1)),
        ("t^gamma2 L^inf L^p3", False, SpaceTimeNormSpec(np.inf, fam.p3, w.gamma2)),
        ("t^beta grad L^2r L^p2", True, SpaceTimeNormSpec(2 * r, fam.p2, w.beta)),
    ]


def delta_u(prev, next_, lambda_, regime, r, p=None, eps=0.0):
    """
    Damped increment h(0, t)(u_next - u_prev) measured in the regime's
    norms, with the weight built from prev. ``profile`` holds the same sum
    over [0, t_i] for every node.
    """
    check_regime(regime)
    prev.u.same_nodes(next_.u)
    weight = damping_weight(prev.u, lambda_, regime, r, p)
    diff = weight.damp(next_.u - prev.u)
    grad = _grad(diff)
    parts, profile = {}, np.zeros(len(diff))
    for label, use_grad, spec in _delta_specs(diff.grid.dim, p, r, regime, eps):
        tl = grad if use_grad else diff
        parts[label] = spacetime_norm(tl, spec)
        profile = profile + cumulative_spacetime_norm(tl, spec)
    return DeltaU(float(sum(parts.values())), parts, profile, float(lambda_))


def gronwall_tails(times, profile, eps):
    """||dU||_{L^{4/eps}(0,T)} and ||dU||_{L^{2/eps}(0,T)}; both are the supremum when eps = 0."""
    if eps == 0:
        sup = float(np.max(profile))
        return {"L^4/eps": sup, "L^2/eps": sup}
    return {"L^4/eps": time_norm(times, profile, 4.0 / eps),
            "L^2/eps": time_norm(times, profile, 2.0 / eps)}


# ------------------------
# Cross-run aggregation
# ------------------------

def constant_stability(frame):
    """max/min of the finite positive inferred constants per inequality."""
    out = {}
    for name, group in frame.groupby("inequality"):
        values = group["inferred_constant"].to_numpy(dtype=float)
        values = values[np.isfinite(values) & (values > 0)]
        out[name] = float(values.max() / values.min()) if values.size else float("nan")
    return out


def fit_vertical_constants(frame, ud_column="ud_besov"):
    """Least-squares (C2, C3) in lhs = C2 |u0^d| + C3 over the vertical rows."""
    rows = frame[frame["inequality"] == "vertical"]
    if len(rows) < 2:
        return float("nan"), float("nan")
    design = np.column_stack([rows[ud_column].to_numpy(dtype=float), np.ones(len(rows))])
    (c2, c3), *_ = np.linalg.lstsq(design, rows["lhs"].to_numpy(dtype=float), rcond=None)
    return float(c2), float(c3)
