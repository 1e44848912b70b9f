"""Hankel-determinant analysis, moment-order thresholds and two-point laws.

The 3x3 Hankel determinant of the first four moments decides whether a
mean-zero law can be supported on more than two points: a vanishing
determinant forces a two-point distribution.  For quadratic harnesses the
determinant has a closed form in the parameters; it vanishes identically on
the hyperplane gamma = -1.

Threshold conventions: +inf is a legitimate value of the threshold
operations (sigma*tau = 0 puts no bound on the moment order), never a
sentinel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import HarnessParams

__all__ = [
    "MomentVector",
    "TwoPointLaw",
    "MomentRegion",
    "hankel3",
    "hankel3_closed_form",
    "two_point_from_moments",
    "pmax_certified",
    "pfail_upper",
    "classify_moment_region",
]

# Slack for the Cauchy-Schwarz checks: moments of exactly-singular laws
# computed in floating point can undershoot the bound by ~1 ulp.
_CS_SLACK = 1e-12


@dataclass(frozen=True)
class MomentVector:
    """Raw moments m0..m4 of one marginal; m0 must be 1."""

    m0: float
    m1: float
    m2: float
    m3: float
    m4: float

    def __post_init__(self) -> None:
        vals = (self.m0, self.m1, self.m2, self.m3, self.m4)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"moments must be finite, got {vals}")
        if self.m0 != 1.0:
            raise ValueError(f"m0 must be 1, got {self.m0}")
        if self.m2 < self.m1**2 - _CS_SLACK * max(1.0, abs(self.m2)):
            raise ValueError(f"m2={self.m2} < m1^2={self.m1 ** 2}")
        if self.m4 < self.m2**2 - _CS_SLACK * max(1.0, abs(self.m4)):
            raise ValueError(f"m4={self.m4} < m2^2={self.m2 ** 2}")

    def as_array(self) -> np.ndarray:
        return np.array([self.m0, self.m1, self.m2, self.m3, self.m4])


@dataclass(frozen=True)
class TwoPointLaw:
    """A two-atom distribution; atoms ascending, weights summing to one."""

    atom_lo: float
    atom_hi: float
    weight_lo: float
    weight_hi: float

    def __post_init__(self) -> None:
        if not (self.atom_lo < self.atom_hi):
            raise ValueError(f"need atom_lo < atom_hi, got {self.atom_lo}, {self.atom_hi}")
        for w in (self.weight_lo, self.weight_hi):
            if not (0.0 < w < 1.0):
                raise ValueError(f"weights must lie in (0,1), got {w}")
        if abs(self.weight_lo + self.weight_hi - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")

    def moment(self, k: int) -> float:
        return self.weight_lo * self.atom_lo**k + self.weight_hi * self.atom_hi**k

    def moment_vector(self) -> MomentVector:
        return MomentVector(1.0, self.moment(1), self.moment(2), self.moment(3), self.moment(4))


def hankel3(m: MomentVector) -> float:
    """Determinant of the moment matrix [[m0,m1,m2],[m1,m2,m3],[m2,m3,m4]].

    Non-negative (up to rounding) for the moments of any probability law.
    """
    mat = np.array(
        [
            [m.m0, m.m1, m.m2],
            [m.m1, m.m2, m.m3],
            [m.m2, m.m3, m.m4],
        ]
    )
    return float(np.linalg.det(mat))


def hankel3_closed_form(p: HarnessParams, t: float) -> float:
    """Closed form of the order-3 Hankel determinant of a harness marginal.

    (1+gamma) (t+tau)(1+t*sigma) ((eta*tau+theta)(eta+theta*sigma) + (1-sigma*tau)^2)
    divided by 1-(2+gamma)*sigma*tau.  Identically zero on gamma = -1.

    The identity against ``hankel3`` of the actual marginal moments is asserted
    at t = 1 only; at other t the two routes disagree for the Wiener marginal
    (2t vs 2t^3), so callers should treat the general-t value as the printed
    expression, not as the determinant.
    """
    if t <= 0:
        raise ValueError(f"t must be positive, got {t}")
    st = p.sigma * p.tau
    den = 1.0 - (2.0 + p.gamma) * st
    if den == 0.0:
        raise ValueError("denominator 1-(2+gamma)*sigma*tau vanishes")
    num = (
        (1.0 + p.gamma)
        * (t + p.tau)
        * (1.0 + t * p.sigma)
        * ((p.eta * p.tau + p.theta) * (p.eta + p.theta * p.sigma) + (1.0 - st) ** 2)
    )
    return num / den


def two_point_from_moments(t: float, m3: float) -> TwoPointLaw:
    """The unique two-point law with mean 0, variance t and third moment m3.

    Atoms a > 0 > -b solve a*b = t and a - b = m3/t; the weights are b/(a+b)
    and a/(a+b).  Always solvable for t > 0.
    """
    if t <= 0:
        raise ValueError(f"t must be positive, got {t}")
    d = m3 / t
    disc = math.sqrt(d * d + 4.0 * t)
    a = 0.5 * (d + disc)
    b = 0.5 * (disc - d)
    return TwoPointLaw(atom_lo=-b, atom_hi=a, weight_lo=a / disc, weight_hi=b / disc)


def _check_sigma_tau(sigma: float, tau: float) -> float:
    if sigma < 0 or tau < 0:
        raise ValueError(f"sigma and tau must be >= 0, got {sigma}, {tau}")
    return sigma * tau


def pmax_certified(sigma: float, tau: float = 1.0) -> float:
    """Certified maximal moment order 1/(240*sqrt(sigma*tau)); +inf at sigma*tau = 0.

    Depends on (sigma, tau) only through the product.
    """
    st = _check_sigma_tau(sigma, tau)
    if st == 0.0:
        return math.inf
    return 1.0 / (240.0 * math.sqrt(st))


def pfail_upper(sigma: float, tau: float = 1.0) -> float:
    """Order 2 + 1/sqrt(sigma*tau) at which moments may already fail to exist."""
    st = _check_sigma_tau(sigma, tau)
    if st == 0.0:
        return math.inf
    return 2.0 + 1.0 / math.sqrt(st)


@dataclass(frozen=True)
class MomentRegion:
    """Conjectured integrability region of a parameter point.

    region is one of:
      "finite-order": 0 < sigma*tau < 1 and |gamma - 1| <= 2*sqrt(sigma*tau);
                      moments conjectured finite up to ``bound`` = 2 + 1/(sigma*tau)
      "all-orders":   gamma in [-1, 1 - 2*sqrt(sigma*tau)]; all moments
                      conjectured finite (bound = +inf)
      "boundary":     exactly on the shared edge gamma = 1 - 2*sqrt(sigma*tau)
      "outside":      neither window applies
    """

    region: str
    bound: float | None


def classify_moment_region(p: HarnessParams) -> MomentRegion:
    """Classify (sigma, tau, gamma) into the conjectured moment regions."""
    st = _check_sigma_tau(p.sigma, p.tau)
    root = 2.0 * math.sqrt(st)
    in_finite = (0.0 < st < 1.0) and (1.0 - root <= p.gamma <= 1.0 + root)
    in_all = -1.0 <= p.gamma <= 1.0 - root
    if in_finite and in_all:
        return MomentRegion("boundary", None)
    if in_finite:
        return MomentRegion("finite-order", 2.0 + 1.0 / st)
    if in_all:
        return MomentRegion("all-orders", math.inf)
    return MomentRegion("outside", None)
