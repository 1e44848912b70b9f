"""Closed-form conditional moments of quadratic harness processes.

A quadratic harness is a centered process with covariance min(s, t), a
martingale one-sided mean structure, and conditional variances that are
quadratic polynomials in the conditioning values.  The family is driven by
five constants (eta, theta, sigma, tau, gamma); sigma and tau must be
non-negative.

Every function here is a pure evaluator of the corresponding formula: no
tolerances are applied and nothing is clamped.  A formula that evaluates to
a negative "variance" is returned with ``admissible=False`` instead of being
silently truncated, so downstream verification can see the inadmissible
parameter/state combination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

__all__ = [
    "HarnessParams",
    "Variance",
    "validate_params",
    "covariance",
    "one_sided_mean",
    "var_forward",
    "var_backward",
    "double_mean",
    "double_var_scale",
    "double_var",
]


@dataclass(frozen=True)
class HarnessParams:
    """The five-parameter tuple (eta, theta, sigma, tau, gamma).

    eta and theta scale the linear terms of the forward/backward conditional
    variances, sigma and tau the quadratic terms, and gamma the cross term of
    the two-sided conditional variance.
    """

    eta: float
    theta: float
    sigma: float
    tau: float
    gamma: float

    def sigma_tau(self) -> float:
        return self.sigma * self.tau


class Variance(NamedTuple):
    """An evaluated conditional variance plus an admissibility flag."""

    value: float
    admissible: bool


def _finite(x: float) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)


def validate_params(p: HarnessParams) -> list[str]:
    """Validate a parameter tuple; return soft warnings, raise on hard errors.

    sigma < 0, tau < 0 or any non-finite field is a hard error.  gamma outside
    [-1, 1 + 2*sqrt(sigma*tau)] is outside the window covered by the moment
    region classification and yields a warning only.
    """
    for name in ("eta", "theta", "sigma", "tau", "gamma"):
        if not _finite(getattr(p, name)):
            raise ValueError(f"{name} must be finite, got {getattr(p, name)!r}")
    if p.sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {p.sigma}")
    if p.tau < 0:
        raise ValueError(f"tau must be >= 0, got {p.tau}")

    warnings = []
    gamma_hi = 1.0 + 2.0 * math.sqrt(p.sigma * p.tau)
    if p.gamma < -1.0:
        warnings.append(f"gamma={p.gamma} below -1: outside the classified region")
    elif p.gamma > gamma_hi:
        warnings.append(
            f"gamma={p.gamma} above 1+2*sqrt(sigma*tau)={gamma_hi}: "
            "outside the classified region"
        )
    return warnings


def _require_pair(s: float, t: float) -> None:
    if not (_finite(s) and _finite(t)):
        raise ValueError("times must be finite")
    if s <= 0:
        raise ValueError(f"times must be positive, got s={s}")
    if s >= t:
        raise ValueError(f"need s < t, got s={s}, t={t}")


def covariance(s: float, t: float) -> float:
    """E(X_s X_t) = min(s, t) for positive times; symmetric in (s, t)."""
    if not (_finite(s) and _finite(t)):
        raise ValueError("times must be finite")
    if s <= 0 or t <= 0:
        raise ValueError(f"times must be positive, got s={s}, t={t}")
    return min(s, t)


def one_sided_mean(direction: str, s: float, t: float, x: float) -> float:
    """One-sided conditional mean for s < t.

    forward:  E(X_t | X_s) = X_s          (martingale)
    backward: E(X_s | X_t) = (s/t) X_t    (linear reverse regression)
    """
    _require_pair(s, t)
    if direction == "forward":
        return x
    if direction == "backward":
        return (s / t) * x
    raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")


def var_forward(p: HarnessParams, s: float, t: float, x_s: float) -> Variance:
    """Forward conditional variance ((t-s)/(1+sigma*s)) * (1 + eta*x + sigma*x^2)."""
    _require_pair(s, t)
    value = ((t - s) / (1.0 + p.sigma * s)) * (1.0 + p.eta * x_s + p.sigma * x_s * x_s)
    return Variance(value, value >= 0.0)


def var_backward(p: HarnessParams, s: float, t: float, x_t: float) -> Variance:
    """Backward conditional variance (s(t-s)/(t+tau)) * (1 + theta*x/t + tau*x^2/t^2)."""
    _require_pair(s, t)
    r = x_t / t
    value = (s * (t - s) / (t + p.tau)) * (1.0 + p.theta * r + p.tau * r * r)
    return Variance(value, value >= 0.0)


def _require_triple(s: float, t: float, u: float, strict_inner: bool) -> None:
    if not (_finite(s) and _finite(t) and _finite(u)):
        raise ValueError("times must be finite")
    if s <= 0:
        raise ValueError(f"times must be positive, got s={s}")
    if strict_inner:
        if not (s < t < u):
            raise ValueError(f"need s < t < u, got ({s}, {t}, {u})")
    else:
        if not (s <= t <= u and s < u):
            raise ValueError(f"need s <= t <= u with s < u, got ({s}, {t}, {u})")


def double_mean(s: float, t: float, u: float, x_s: float, x_u: float) -> float:
    """Two-sided conditional mean: affine interpolation between x_s and x_u.

    Equals x_s at t=s and x_u at t=u.
    """
    _require_triple(s, t, u, strict_inner=False)
    w = (u - t) / (u - s)
    return w * x_s + (1.0 - w) * x_u


def double_var_scale(p: HarnessParams, s: float, t: float, u: float) -> float:
    """Scale factor (u-t)(t-s) / (u(1+s*sigma) + tau - s*gamma) of the two-sided variance."""
    _require_triple(s, t, u, strict_inner=False)
    den = u * (1.0 + s * p.sigma) + p.tau - s * p.gamma
    if den <= 0:
        raise ValueError(
            f"inadmissible parameters on ({s}, {t}, {u}): scale denominator {den} <= 0"
        )
    return (u - t) * (t - s) / den


def double_var(
    p: HarnessParams, s: float, t: float, u: float, x_s: float, x_u: float
) -> Variance:
    """Two-sided conditional variance, quadratic in the bridge coordinates.

    With dx = (x_u - x_s)/(u - s) and m = (u*x_s - s*x_u)/(u - s) the bracket is
    1 + theta*dx + eta*m + tau*dx^2 + sigma*m^2 - (1-gamma)*m*dx, scaled by
    ``double_var_scale``.  Reduces to the Brownian-bridge variance
    (u-t)(t-s)/(u-s) for (0, 0, 0, 0, 1).
    """
    scale = double_var_scale(p, s, t, u)
    dx = (x_u - x_s) / (u - s)
    m = (u * x_s - s * x_u) / (u - s)
    bracket = (
        1.0
        + p.theta * dx
        + p.eta * m
        + p.tau * dx * dx
        + p.sigma * m * m
        - (1.0 - p.gamma) * m * dx
    )
    value = scale * bracket
    return Variance(value, value >= 0.0)
