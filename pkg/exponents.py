"""
Exponent families and admissibility inequalities for both regimes.

Every module that needs a Lebesgue or weight exponent gets it from here, so
the two families cannot drift apart:

* theorem1: {dr/(r-1), dr/(2r-1), dr/(2(r-1))}
* theorem2: {p*, p2, p3} with p* = dp/(d-p), p2 = 3pd/(2p+d), p3 = 3p*/2,
  plus the time weights alpha, beta, gamma1, gamma2.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from suite_errors import DomainError, ExponentError

REGIMES = ("theorem1", "theorem2")


@dataclass(frozen=True)
class Constraint:
    """One inequality lhs < rhs (or lhs <= rhs when not strict), evaluated."""

    name: str
    lhs: float
    rhs: float
    strict: bool = True
    advisory: bool = False

    @property
    def satisfied(self):
        return self.lhs < self.rhs if self.strict else self.lhs <= self.rhs

    @property
    def margin(self):
        return self.rhs - self.lhs

    def describe(self):
        state = "ok" if self.satisfied else "violated"
        tag = " [advisory]" if self.advisory else ""
        return f"{self.name}={self.rhs:.3f} {state}: lhs={self.lhs:.6g}, margin={self.margin:+.6g}{tag}"


@dataclass(frozen=True)
class WeightExponents:
    """Time weights of the weighted regime; alpha = beta + gamma1, gamma2 = gamma1 + 1/(2r)."""

    alpha: float
    beta: float
    gamma1: float
    gamma2: float


@dataclass(frozen=True)
class ExponentFamily:
    regime: str
    d: int
    p: float
    r: float
    q_u: Optional[float] = None
    q_grad: Optional[float] = None
    q_grad_r: Optional[float] = None
    p_star: Optional[float] = None
    p2: Optional[float] = None
    p3: Optional[float] = None
    weights: Optional[WeightExponents] = None

    @property
    def s_crit(self):
        return critical_regularity(self.d, self.p)

    @property
    def eta_power(self):
        return 4 * self.r if self.regime == "theorem1" else 2 * self.r


def check_regime(regime):
    if regime not in REGIMES:
        raise DomainError(f"regime must be one of {REGIMES}, got {regime!r}")


def dual(q):
    return np.inf if q == 1 else (1.0 if np.isinf(q) else q / (q - 1.0))


def critical_regularity(d, p):
    return d / p - 1.0


# ------------------------
# Admissibility
# ------------------------

def admissibility(d, p, r, regime):
    check_regime(regime)
    if regime == "theorem1":
        return [
            Constraint("r > 1", 1.0, r),
            Constraint("p > 1", 1.0, p),
            Constraint("p < dr/(2r-1)", p, d * r / (2 * r - 1)),
        ]
    dp = d / p
    return [
        Constraint("p > 2d/3", 2 * d / 3.0, p),
        Constraint("p < d", p, float(d)),
        Constraint("r > 1", 1.0, r),
        Constraint("(1/3)(d/p-1) < 1/2-1/(2r)", (dp - 1.0) / 3.0, 0.5 - 1.0 / (2 * r)),
        Constraint("(2/3)(d/p)-d/(6p) < 1/2-1/(2r)", 2.0 * dp / 3.0 - d / (6.0 * p),
                   0.5 - 1.0 / (2 * r), advisory=True),
        Constraint("1/r < (1/3)(d/p-1)", 1.0 / r, (dp - 1.0) / 3.0),
        Constraint("1/r < 4/3-d/p", 1.0 / r, 4.0 / 3.0 - dp),
    ]


def violations(constraints):
    return [c for c in constraints if not c.satisfied and not c.advisory]


def require_admissible(d, p, r, regime):
    bad = violations(admissibility(d, p, r, regime))
    if bad:
        raise ExponentError("; ".join(c.describe() for c in bad))


def eps_bound(d, p, r, regime, eps):
    check_regime(regime)
    if regime == "theorem1":
        return Constraint("eps < 2(d/p-2+1/r)", eps, 2.0 * (d / p - 2.0 + 1.0 / r))
    return Constraint("eps <= min(1/r,1-1/r,d/p-1)", eps,
                      min(1.0 / r, 1.0 - 1.0 / r, d / p - 1.0), strict=False)


# ------------------------
# Families
# ------------------------

def weight_exponents(d, p, r):
    # p1 in the definition of alpha is read as p
    alpha = 0.5 * (3.0 - d / p) - 1.0 / r
    fam = _theorem2_spaces(d, p)
    beta = 0.5 * (2.0 - d / fam["p2"]) - 1.0 / (2 * r)
    gamma2 = 0.5 * (1.0 - d / fam["p3"])
    gamma1 = gamma2 - 1.0 / (2 * r)
    return WeightExponents(alpha, beta, gamma1, gamma2)


def _theorem2_spaces(d, p):
    if not p < d:
        raise ExponentError(f"p < d={d:.3f} violated: p={p:.6g}")
    p_star = d * p / (d - p)
    return {"p_star": p_star, "p2": 3.0 * p * d / (2.0 * p + d), "p3": 1.5 * p_star}


def exponent_family(d, p, r, regime):
    check_regime(regime)
    if regime == "theorem1":
        return ExponentFamily(regime, d, p, r,
                              q_u=d * r / (r - 1.0),
                              q_grad=d * r / (2.0 * r - 1.0),
                              q_grad_r=d * r / (2.0 * (r - 1.0)))
    spaces = _theorem2_spaces(d, p)
    return ExponentFamily(regime, d, p, r, weights=weight_exponents(d, p, r), **spaces)


# ------------------------
# Gain exponents
# ------------------------

def _from_reciprocal(inv, label):
    if inv <= 0:
        raise ExponentError(f"{label} gives 1/q={inv:.6g} <= 0")
    return 1.0 / inv


def sobolev_exponent(d, p):
    """dp/(d-p), the target of grad e^{t Lap} gains in the Sobolev probe."""
    if not p < d:
        raise ExponentError(f"p < d={d:.3f} violated: p={p:.6g}")
    return d * p / (d - p)


def plain_gain_exponent(d, p, r):
    """1/q = 1/p - (2r-1)/(dr)."""
    return _from_reciprocal(1.0 / p - (2.0 * r - 1.0) / (d * r), "1/p-(2r-1)/(dr)")


def gradient_gain_exponent(d, p, r):
    """1/q = 1/p - (r-1)/(dr)."""
    return _from_reciprocal(1.0 / p - (r - 1.0) / (d * r), "1/p-(r-1)/(dr)")


def damping_exponents(d, r, eps):
    """(q*, q_grad*) = (2dr/((2-eps)r-2), 2dr/((4-eps)r-2))."""
    den = (2.0 - eps) * r - 2.0
    if den <= 0:
        raise ExponentError(f"(2-eps)r-2 > 0 violated: value={den:.6g}")
    return 2.0 * d * r / den, 2.0 * d * r / ((4.0 - eps) * r - 2.0)
