"""Statistical verification of the closed-form conditional moments.

Binned conditional-moment estimation against the exact predictions,
empirical and exact tail curves N(t) = Pr(|X| > t) + Pr(|Y| > t), the
certified tail-recursion inequality check, and Hill tail-index estimation.

Binning is equal-count (quantile) rather than equal-width: it stabilizes the
per-bin standard errors when the conditioning variable is heavy tailed.
Pass thresholds are a fixed multiple of the standard error (3 by default),
configurable by the caller; the predictions inside a table come from the
same closed-form code path the rest of the package uses, never from a
re-derivation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import core
from .certificates import Certificate, k_factor
from .simulate import Ensemble, known_params

__all__ = [
    "BinnedConditional",
    "QuadraticFit",
    "TailCurve",
    "SlopeCheck",
    "TailBoundRow",
    "TailBoundReport",
    "HillEstimate",
    "estimate_conditional",
    "fit_quadratic",
    "conditional_mean_slope",
    "empirical_covariance",
    "tail_curve",
    "gaussian_pair_tail_curve",
    "check_tail_recursion",
    "hill_tail_index",
    "gaussian_tail",
]

MIN_BIN_COUNT = 30


def gaussian_tail(t: float) -> float:
    """Pr(|Z| > t) for a standard normal Z."""
    return math.erfc(t / math.sqrt(2.0))


@dataclass(frozen=True)
class BinnedConditional:
    """Per-bin conditional moments of the target given the conditioning value.

    ``confident`` marks bins with at least MIN_BIN_COUNT samples; only those
    enter fits.
    """

    direction: str
    s: float
    t: float
    bin_lo: np.ndarray
    bin_hi: np.ndarray
    count: np.ndarray
    x_mean: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    se_mean: np.ndarray
    se_var: np.ndarray
    pred_mean: np.ndarray
    pred_var: np.ndarray
    confident: np.ndarray

    @property
    def n_bins(self) -> int:
        return self.count.size

    def rows(self) -> list[dict]:
        out = []
        for i in range(self.n_bins):
            out.append(
                {
                    "bin_lo": float(self.bin_lo[i]),
                    "bin_hi": float(self.bin_hi[i]),
                    "n": int(self.count[i]),
                    "mean": float(self.mean[i]),
                    "var": float(self.var[i]),
                    "se_mean": float(self.se_mean[i]),
                    "se_var": float(self.se_var[i]),
                    "pred_mean": float(self.pred_mean[i]),
                    "pred_var": float(self.pred_var[i]),
                }
            )
        return out


def estimate_conditional(
    e: Ensemble,
    s_index: int,
    t_index: int,
    n_bins: int,
    direction: str = "backward",
) -> BinnedConditional:
    """Quantile-bin the conditioning variable and estimate the target moments.

    forward conditions X_t on X_s, backward conditions X_s on X_t.  The
    conditional variance column is the per-bin mean squared deviation of the
    target from its exact conditional mean (the one-sided-mean formula is an
    identity for these processes, so this estimates the conditional variance
    without the within-bin spread of the conditional mean leaking in).  The
    predicted columns are the closed-form values at each bin's
    conditioning-variable mean, using the parameters the process kind is
    known to satisfy.

    When the conditioning variable takes at most n_bins distinct values
    (lattice marginals), each value becomes its own bin; otherwise duplicate
    quantile edges are collapsed, so fewer than n_bins bins may come back.
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be forward|backward, got {direction!r}")
    if n_bins < 5:
        raise ValueError(f"need n_bins >= 5, got {n_bins}")
    if not (0 <= s_index < t_index < e.n_times):
        raise ValueError(f"need 0 <= s_index < t_index < {e.n_times}")

    s = float(e.grid[s_index])
    t = float(e.grid[t_index])
    xs = e.paths[:, s_index]
    xt = e.paths[:, t_index]
    cond, target = (xs, xt) if direction == "forward" else (xt, xs)

    uniq = np.unique(cond)
    if uniq.size < 2:
        raise ValueError("conditioning variable is degenerate (constant)")
    if uniq.size <= n_bins:
        edges = np.append(uniq, uniq[-1])
    else:
        edges = np.unique(np.quantile(cond, np.linspace(0.0, 1.0, n_bins + 1)))
    assign = np.clip(np.searchsorted(edges[:-1], cond, side="right") - 1, 0, edges.size - 2)

    slope = 1.0 if direction == "forward" else s / t
    resid_sq = (target - slope * cond) ** 2

    nb = edges.size - 1
    count = np.zeros(nb, dtype=np.int64)
    x_mean = np.zeros(nb)
    mean = np.zeros(nb)
    var = np.zeros(nb)
    se_mean = np.zeros(nb)
    se_var = np.zeros(nb)
    for b in range(nb):
        sel = assign == b
        n = int(np.count_nonzero(sel))
        count[b] = n
        if n == 0:
            continue
        x_mean[b] = cond[sel].mean()
        y = target[sel]
        mean[b] = y.mean()
        r2 = resid_sq[sel]
        var[b] = r2.mean()
        if n > 1:
            se_mean[b] = y.std(ddof=1) / math.sqrt(n)
            se_var[b] = r2.std(ddof=1) / math.sqrt(n)

    p = known_params(e.kind)
    pred_mean = np.zeros(nb)
    pred_var = np.zeros(nb)
    for b in range(nb):
        if count[b] == 0:
            continue
        x = float(x_mean[b])
        if direction == "forward":
            pred_mean[b] = core.one_sided_mean("forward", s, t, x)
            pred_var[b] = core.var_forward(p, s, t, x).value
        else:
            pred_mean[b] = core.one_sided_mean("backward", s, t, x)
            pred_var[b] = core.var_backward(p, s, t, x).value

    confident = count >= MIN_BIN_COUNT
    return BinnedConditional(
        direction=direction,
        s=s,
        t=t,
        bin_lo=edges[:-1],
        bin_hi=edges[1:],
        count=count,
        x_mean=x_mean,
        mean=mean,
        var=var,
        se_mean=se_mean,
        se_var=se_var,
        pred_mean=pred_mean,
        pred_var=pred_var,
        confident=confident,
    )


@dataclass(frozen=True)
class QuadraticFit:
    c0: float
    c1: float
    c2: float
    r_squared: float
    se: tuple[float, float, float]
    n_bins_used: int


def fit_quadratic(b: BinnedConditional) -> QuadraticFit:
    """Weighted least squares of per-bin variance on (1, x, x^2).

    Weights are 1/se_var^2 over the confident bins; needs at least 5 of them.
    Bins whose variance estimate is exact (zero standard error, e.g. a
    lattice value with a degenerate conditional law) get their se floored at
    1e-3 of the smallest positive one, which pins the fit through them
    without making the normal equations singular; noiseless synthetic input
    (all se zero) falls back to an unweighted fit.
    """
    sel = np.asarray(b.confident, dtype=bool)
    n_used = int(np.count_nonzero(sel))
    if n_used < 5:
        raise ValueError(f"need >= 5 confident bins, got {n_used}")
    x = b.x_mean[sel]
    y = b.var[sel]
    se = b.se_var[sel]
    # ses indistinguishable from 0 at the bin's variance scale count as exact
    exactish = se <= 1e-12 * np.maximum(np.abs(y), 1e-30)
    if np.any(~exactish):
        floor = 1e-3 * se[~exactish].min()
        w = 1.0 / np.maximum(se, floor) ** 2
    else:
        w = np.ones_like(se)

    design = np.column_stack([np.ones_like(x), x, x * x])
    wd = design * w[:, None]
    gram = design.T @ wd
    beta = np.linalg.solve(gram, wd.T @ y)
    cov = np.linalg.inv(gram)

    fitted = design @ beta
    ybar = np.sum(w * y) / np.sum(w)
    ss_res = float(np.sum(w * (y - fitted) ** 2))
    ss_tot = float(np.sum(w * (y - ybar) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot

    se = tuple(float(v) for v in np.sqrt(np.diag(cov)))
    return QuadraticFit(float(beta[0]), float(beta[1]), float(beta[2]), r2, se, n_used)


@dataclass(frozen=True)
class SlopeCheck:
    slope: float
    se: float
    predicted: float

    @property
    def deviation_se(self) -> float:
        return abs(self.slope - self.predicted) / self.se if self.se > 0 else math.inf


def conditional_mean_slope(e: Ensemble, s_index: int, t_index: int, direction: str) -> SlopeCheck:
    """OLS slope of the one-sided conditional mean with a robust standard error.

    forward regresses X_t on X_s (slope 1 for a martingale); backward
    regresses X_s on X_t (slope s/t).
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be forward|backward, got {direction!r}")
    if not (0 <= s_index < t_index < e.n_times):
        raise ValueError(f"need 0 <= s_index < t_index < {e.n_times}")
    xs = e.paths[:, s_index]
    xt = e.paths[:, t_index]
    s = float(e.grid[s_index])
    t = float(e.grid[t_index])
    x, y = (xs, xt) if direction == "forward" else (xt, xs)
    predicted = 1.0 if direction == "forward" else s / t

    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(np.sum(xc * xc))
    slope = float(np.sum(xc * yc)) / sxx
    resid = yc - slope * xc
    se = math.sqrt(float(np.sum((xc * resid) ** 2))) / sxx
    return SlopeCheck(slope=slope, se=se, predicted=predicted)


def empirical_covariance(e: Ensemble, i: int, j: int) -> tuple[float, float]:
    """Sample mean of X_{t_i} X_{t_j} and its standard error (target min(t_i, t_j))."""
    prod = e.paths[:, i] * e.paths[:, j]
    return float(prod.mean()), float(prod.std(ddof=1) / math.sqrt(prod.size))


@dataclass(frozen=True)
class TailCurve:
    """Two-variable tail function N(t) on a threshold ladder.

    n_samples is None for exact (analytic) curves: then the sampling
    tolerance is zero.
    """

    thresholds: np.ndarray
    n_values: np.ndarray
    n_samples: int | None

    def __post_init__(self) -> None:
        th = np.asarray(self.thresholds, dtype=np.float64)
        nv = np.asarray(self.n_values, dtype=np.float64)
        if th.ndim != 1 or th.size == 0 or nv.shape != th.shape:
            raise ValueError("thresholds and n_values must be matching 1-d arrays")
        if not np.all(th > 0) or not np.all(np.diff(th) > 0):
            raise ValueError("thresholds must be ascending and positive")
        if np.any(nv < 0) or np.any(nv > 2):
            raise ValueError("tail values must lie in [0, 2]")
        if np.any(np.diff(nv) > 1e-12):
            raise ValueError("tail values must be non-increasing")


def tail_curve(
    e: Ensemble,
    s_index: int,
    t_index: int,
    thresholds,
    normalize: bool = True,
) -> TailCurve:
    """Empirical N(t) = Pr(|X| > t) + Pr(|Y| > t) for the pair (X_s, X_t).

    With normalize=True the pair is standardized to X_s/sqrt(s), X_t/sqrt(t)
    (unit variances, correlation sqrt(s/t)).
    """
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if thresholds.ndim != 1 or thresholds.size == 0:
        raise ValueError("thresholds must be a non-empty 1-d sequence")
    if not np.all(thresholds > 0) or not np.all(np.diff(thresholds) > 0):
        raise ValueError("thresholds must be ascending and positive")
    if not (0 <= s_index < t_index < e.n_times):
        raise ValueError(f"need 0 <= s_index < t_index < {e.n_times}")
    x = np.abs(e.paths[:, s_index])
    y = np.abs(e.paths[:, t_index])
    if normalize:
        x = x / math.sqrt(float(e.grid[s_index]))
        y = y / math.sqrt(float(e.grid[t_index]))
    xs = np.sort(x)
    ys = np.sort(y)
    n = xs.size
    px = 1.0 - np.searchsorted(xs, thresholds, side="right") / n
    py = 1.0 - np.searchsorted(ys, thresholds, side="right") / n
    return TailCurve(thresholds=thresholds, n_values=px + py, n_samples=n)


def gaussian_pair_tail_curve(thresholds) -> TailCurve:
    """Exact N(t) = 4 * Pr(Z > t) for a pair of standard normal marginals."""
    thresholds = np.asarray(thresholds, dtype=np.float64)
    values = np.array([2.0 * gaussian_tail(float(t)) for t in thresholds])
    return TailCurve(thresholds=thresholds, n_values=values, n_samples=None)


@dataclass(frozen=True)
class TailBoundRow:
    t: float
    n_t: float
    n_kt: float
    bound: float
    violation: float
    tolerance: float


@dataclass(frozen=True)
class TailBoundReport:
    passed: bool
    max_violation: float
    k: float
    se_multiplier: float
    rows: tuple[TailBoundRow, ...]


def _binomial_se(n_value: float, n_samples: int | None) -> float:
    if n_samples is None:
        return 0.0
    clipped = min(max(n_value, 0.0), 2.0)
    return math.sqrt(clipped * (2.0 - clipped) / n_samples)


def check_tail_recursion(
    tc: TailCurve,
    cert: Certificate,
    rho: float,
    se_multiplier: float = 3.0,
) -> TailBoundReport:
    """Check N(Kt) <= (c1/t^2 + c2/t + q) N(t) on the curve, K = 2/rho - 1.

    N(Kt) is log-linearly interpolated in log-threshold between curve points.
    Each threshold passes when the violation does not exceed
    ``se_multiplier`` times the binomial sampling tolerance (zero for exact
    curves).  Thresholds t with K*t beyond the ladder are skipped; at least
    one must remain.
    """
    if not cert.valid:
        raise ValueError(
            f"certificate is invalid (failed step: {cert.failed_step}); "
            "its coefficients certify nothing"
        )
    k = k_factor(rho)
    th = tc.thresholds
    nv = tc.n_values
    log_t = np.log(th)

    rows = []
    for i in range(th.size):
        kt = k * th[i]
        if kt > th[-1] * (1.0 + 1e-12):
            break
        n_t = float(nv[i])
        # interpolate N at K*t in (log t, log N); treat empty tails as 0
        j = int(np.searchsorted(th, kt, side="left"))
        if j == 0:
            n_kt = float(nv[0])
        elif j >= th.size or math.isclose(kt, th[j], rel_tol=1e-12):
            n_kt = float(nv[min(j, th.size - 1)])
        else:
            lo, hi = j - 1, j
            if nv[lo] <= 0.0 or nv[hi] <= 0.0:
                n_kt = 0.0
            else:
                frac = (math.log(kt) - log_t[lo]) / (log_t[hi] - log_t[lo])
                n_kt = math.exp(
                    (1.0 - frac) * math.log(nv[lo]) + frac * math.log(nv[hi])
                )
        coeff = cert.c1 / th[i] ** 2 + cert.c2 / th[i] + cert.q
        bound = coeff * n_t
        violation = n_kt - bound
        tol = _binomial_se(n_kt, tc.n_samples) + coeff * _binomial_se(n_t, tc.n_samples)
        rows.append(
            TailBoundRow(
                t=float(th[i]),
                n_t=n_t,
                n_kt=n_kt,
                bound=float(bound),
                violation=float(violation),
                tolerance=float(tol),
            )
        )

    if not rows:
        raise ValueError(
            f"insufficient threshold coverage: no t with K*t <= {th[-1]} (K={k})"
        )
    passed = all(r.violation <= se_multiplier * r.tolerance for r in rows)
    max_violation = max(r.violation for r in rows)
    return TailBoundReport(
        passed=passed,
        max_violation=max_violation,
        k=k,
        se_multiplier=se_multiplier,
        rows=tuple(rows),
    )


@dataclass(frozen=True)
class HillEstimate:
    alpha: float
    ci_low: float
    ci_high: float
    k: int
    n: int


def hill_tail_index(samples, k: int) -> HillEstimate:
    """Hill estimator of the polynomial tail exponent on the top-k order
    statistics of |samples|, with the asymptotic 95% interval
    alpha * (1 -+ 1.96/sqrt(k))."""
    x = np.abs(np.asarray(samples, dtype=np.float64).ravel())
    n = x.size
    if k < 1 or k >= n / 2:
        raise ValueError(f"need 1 <= k < n/2, got k={k}, n={n}")
    x = np.sort(x)[::-1]
    top = x[: k + 1]
    if top[-1] <= 0.0:
        raise ValueError("top-k order statistics must be positive")
    logs = np.log(top)
    h = float(np.mean(logs[:k]) - logs[k])
    if h <= 0.0:
        raise ValueError("degenerate sample: top order statistics are all equal")
    alpha = 1.0 / h
    half = 1.96 / math.sqrt(k)
    return HillEstimate(
        alpha=alpha,
        ci_low=alpha * (1.0 - half),
        ci_high=alpha * (1.0 + half),
        k=k,
        n=n,
    )
