"""Explicit-constant certificates for the moment-integrability chain.

The chain certifies finiteness of moments of order p+1 for a pair of
standardized variables (X, Y) whose conditional second moments satisfy

    E((X - rho*Y)^2 | Y) <= A + B|Y| + (1-rho)*rho*delta*Y^2      (and X <-> Y)

with correlation rho in (1/2, 1) and a small quadratic coefficient delta.
Writing N(t) = Pr(|X| > t) + Pr(|Y| > t) and K = 2/rho - 1, the tail
recursion

    N(K t) <= (c1/t^2 + c2/t + q) N(t),        q = 8*delta/(1 - rho)

holds whenever delta < (1-rho)/64; a change of variables then lifts
integrability one order provided the contraction q * K^(p+1) < 1.  For a
harness with quadratic coefficients sigma, tau the two time points
s = rho*sqrt(tau/sigma), t = sqrt(tau/sigma)/rho realize exactly this setup
with delta = 2*sqrt(sigma*tau), so the chain certifies a constant c with

    p + 1 <= 1 / (c * sqrt(sigma*tau))   =>   E|X_t|^(p+1) < inf.

The printed chain gives c = 240.  This module makes every inequality of the
chain explicit and machine-checkable, evaluates the sharp variants (exact
K^(p+1) instead of the rounded bound 2e^2, the exact split admissibility
instead of the 1/64 margin), and searches the chain's free parameters for
the smallest constant the same proof structure supports.

Certificate semantics: the certified ``constant`` is computed in closed
form; the recorded inequality steps are evaluated at a witness
delta = delta_max * (1 - 2^-40) strictly inside the certified range, since
the contraction is a strict inequality while the certified conclusion is
stated for the closed range (the usual closure gloss).  Only q affects the
constant; c1 and c2 merely have to be finite and explicit so that empirical
tail checks can use them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

__all__ = [
    "DEFAULT_SPLIT",
    "ChainParams",
    "Step",
    "TailBound",
    "LiftCheck",
    "Certificate",
    "rho_for_order",
    "k_factor",
    "embedding",
    "tail_recursion_coeffs",
    "moment_lift_check",
    "integrability_constant",
    "make_certificate",
    "replay_certificate",
    "optimize_constant",
    "ladder",
]

# Weight of the overlap-event threshold (1-rho)*w*sqrt(Y^2+t^2).  The event
# split requires w <= 1/sqrt(2); the default is that boundary value.
DEFAULT_SPLIT = math.sqrt(0.5)

# Witness nudge: inequality steps are recorded just inside the certified range.
_WITNESS = 1.0 - 2.0**-40

_MARGIN_RULES = ("margin-64", "margin-exact")
_CONTRACTION_RULES = ("paper", "exact")


def rho_for_order(p: float) -> float:
    """Default correlation 1 - 1/(p+1) for lifting moments of order p; needs p > 1."""
    if not (p > 1.0):
        raise ValueError(f"need p > 1 (rho must exceed 1/2), got p={p}")
    return 1.0 - 1.0 / (p + 1.0)


def k_factor(rho: float) -> float:
    """Tail-scaling factor K = 2/rho - 1; exceeds 1 for rho < 1."""
    if not (0.0 < rho <= 1.0):
        raise ValueError(f"rho must lie in (0, 1], got {rho}")
    return 2.0 / rho - 1.0


class Embedding(NamedTuple):
    s: float
    t: float
    delta: float
    check_rho: float


def embedding(sigma: float, tau: float, rho: float) -> Embedding:
    """Two time points whose standardized pair has correlation rho.

    s = rho*sqrt(tau/sigma), t = sqrt(tau/sigma)/rho place X_s/sqrt(s) and
    X_t/sqrt(t) at correlation sqrt(s/t) = rho, with quadratic tail
    coefficient delta = 2*sqrt(sigma*tau).  Undefined for sigma*tau = 0
    (nothing needs certifying there).
    """
    if not (sigma > 0.0 and tau > 0.0):
        raise ValueError(f"sigma and tau must be > 0, got {sigma}, {tau}")
    if not (0.5 < rho < 1.0):
        raise ValueError(f"rho must lie in (1/2, 1), got {rho}")
    base = math.sqrt(tau / sigma)
    s = rho * base
    t = base / rho
    return Embedding(s, t, 2.0 * math.sqrt(sigma * tau), math.sqrt(s / t))


@dataclass(frozen=True)
class ChainParams:
    """Free parameters of one pass through the chain.

    delta is the quadratic tail coefficient, K the tail-scaling factor, and
    A, B the affine coefficients of the conditional second-moment bound.
    """

    p: float
    rho: float
    delta: float
    K: float
    A: float = 1.0
    B: float = 1.0


@dataclass(frozen=True)
class Step:
    """One recorded inequality: lhs (<)= rhs."""

    name: str
    lhs: float
    rhs: float
    passed: bool


@dataclass(frozen=True)
class TailBound:
    """Explicit coefficients of the tail recursion N(Kt) <= (c1/t^2+c2/t+q) N(t)."""

    c1: float
    c2: float
    q: float
    a_split: float
    valid: bool
    failed_step: str | None
    steps: tuple[Step, ...]


def tail_recursion_coeffs(
    chain: ChainParams,
    *,
    split_w: float | None = None,
    margin_rule: str = "margin-64",
) -> TailBound:
    """Explicit (c1, c2, q) with the hypothesis checks that certify them.

    With overlap-split weight w (default 1/sqrt(2)) and escape-split
    coefficient a:

        c1 = 2A/(w^2 (1-rho)^2) + 2A/(1-rho)^4
        c2 = 2B/(w^2 (1-rho)^2) + B/(a (1-rho)^2)
        q  = 4*delta/(w^2 (1-rho))          (= 8*delta/(1-rho) at default w)

    The two-stage bookkeeping is the standard one: the escape events spill
    at most (1/2) N(Kt), which is absorbed and the remaining coefficients
    doubled.  The escape-split coefficient is a = sqrt(2*delta*rho*(1-rho))
    for delta > 0 (absorption ratio exactly 1/2); at delta = 0 that choice
    degenerates, so the maximal admissible a_max = rho^2(1-rho)/(2-rho) is
    used instead, keeping c2 finite.  Hypothesis violations yield
    ``valid=False`` with the first failing step recorded.
    """
    if margin_rule not in _MARGIN_RULES:
        raise ValueError(f"margin_rule must be one of {_MARGIN_RULES}, got {margin_rule!r}")
    rho, delta, A, B = chain.rho, chain.delta, chain.A, chain.B
    if not (0.0 < rho < 1.0):
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    if A < 0.0 or B < 0.0:
        raise ValueError("A and B must be >= 0")
    w = DEFAULT_SPLIT if split_w is None else split_w
    if not (0.0 < w <= DEFAULT_SPLIT):
        raise ValueError(f"split weight must lie in (0, 1/sqrt(2)], got {w}")

    u = 1.0 - rho
    a_max = rho * rho * u / (2.0 - rho)
    # The split coefficient is compared in squared form: a^2 = 2*delta*rho*u
    # exactly, so the absorption ratio delta*rho*u / (a^2/2) is exactly 1 and
    # no sqrt round-trip can flip the comparisons by an ulp.
    prod = delta * rho * u
    a_sq = 2.0 * prod if delta > 0.0 else a_max * a_max
    a = math.sqrt(a_sq)

    steps = [
        Step("rho-lower", 0.5, rho, 0.5 < rho),
        Step("rho-upper", rho, 1.0, rho < 1.0),
        Step("delta-nonnegative", 0.0, delta, 0.0 <= delta),
    ]
    if margin_rule == "margin-64":
        steps.append(Step("delta-margin", delta, u / 64.0, delta < u / 64.0))
    else:
        bound = rho**4 * u / (2.0 - rho) ** 2
        steps.append(Step("delta-margin", 2.0 * rho * delta, bound, 2.0 * rho * delta < bound))
    steps.append(Step("split-admissible", a_sq, a_max * a_max, a_sq <= a_max * a_max))
    steps.append(Step("quadratic-absorption", prod, 0.5 * a_sq, prod <= 0.5 * a_sq))

    w2 = 0.5 if split_w is None else w * w
    c1 = 2.0 * A / (w2 * u * u) + 2.0 * A / u**4
    c2 = 2.0 * B / (w2 * u * u) + (0.0 if B == 0.0 else B / (a * u * u))
    q = 4.0 * delta / (w2 * u)

    failed = next((s.name for s in steps if not s.passed), None)
    return TailBound(c1, c2, q, a, failed is None, failed, tuple(steps))


@dataclass(frozen=True)
class LiftCheck:
    """Result of the one-order moment-lift contraction test."""

    passed: bool
    value: float
    coefficient: float  # value per unit delta
    rho: float
    k: float
    mode: str


def moment_lift_check(p: float, delta: float, mode: str = "paper") -> LiftCheck:
    """Test the contraction that lifts moments of order p to order p+1.

    paper mode tests the printed condition 120*delta*(p+1) < 1; exact mode
    tests 8*delta*(p+1)*K^(p+1) < 1 with K evaluated at rho = 1 - 1/(p+1).
    Both are strict.
    """
    if mode not in _CONTRACTION_RULES:
        raise ValueError(f"mode must be one of {_CONTRACTION_RULES}, got {mode!r}")
    if delta < 0.0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    rho = rho_for_order(p)
    k = k_factor(rho)
    if mode == "paper":
        coeff = 120.0 * (p + 1.0)
    else:
        coeff = 8.0 * (p + 1.0) * k ** (p + 1.0)
    value = coeff * delta
    return LiftCheck(value < 1.0, value, coeff, rho, k, mode)


def integrability_constant(mode: str, p: float) -> float:
    """Smallest c certified by the chain: moments of order p+1 are finite
    whenever (p+1)*sqrt(sigma*tau) <= 1/c.

    paper mode returns the printed 240 for every p.  exact mode evaluates the
    chain's two binding inequalities sharply at the default rho = 1 - 1/(p+1):
    max(16*K^(p+1), 128), the second term coming from the delta-margin
    requirement 2*sqrt(sigma*tau) < (1-rho)/64.
    """
    if mode not in _CONTRACTION_RULES:
        raise ValueError(f"mode must be one of {_CONTRACTION_RULES}, got {mode!r}")
    if not (p > 1.0):
        raise ValueError(f"need p > 1, got {p}")
    if mode == "paper":
        return 240.0
    k = k_factor(rho_for_order(p))
    return max(16.0 * k ** (p + 1.0), 128.0)


@dataclass(frozen=True)
class Certificate:
    """An explicit-constant certificate with its replayable inequality steps."""

    chain: ChainParams
    c1: float
    c2: float
    q: float
    constant: float
    valid: bool
    failed_step: str | None
    steps: tuple[Step, ...]
    delta_rule: str = "margin-64"
    contraction_rule: str = "paper"
    split_w: float | None = None
    rho_tied: bool = True

    def to_json_dict(self) -> dict:
        return {
            "p": self.chain.p,
            "rho": self.chain.rho,
            "rho_tied": self.rho_tied,
            "delta": self.chain.delta,
            "delta_rule": self.delta_rule,
            "contraction_rule": self.contraction_rule,
            "split_w": self.split_w,
            "K": self.chain.K,
            "A": self.chain.A,
            "B": self.chain.B,
            "c1": self.c1,
            "c2": self.c2,
            "q": self.q,
            "constant": self.constant,
            "valid": self.valid,
            "failed_step": self.failed_step,
            "steps": [
                {"name": s.name, "lhs": s.lhs, "rhs": s.rhs, "pass": s.passed}
                for s in self.steps
            ],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Certificate":
        chain = ChainParams(
            p=d["p"], rho=d["rho"], delta=d["delta"], K=d["K"], A=d["A"], B=d["B"]
        )
        steps = tuple(
            Step(s["name"], s["lhs"], s["rhs"], s["pass"]) for s in d["steps"]
        )
        return cls(
            chain=chain,
            c1=d["c1"],
            c2=d["c2"],
            q=d["q"],
            constant=d["constant"],
            valid=d["valid"],
            failed_step=d["failed_step"],
            steps=steps,
            delta_rule=d["delta_rule"],
            contraction_rule=d["contraction_rule"],
            split_w=d["split_w"],
            rho_tied=d["rho_tied"],
        )


def _constant_closed_form(
    p: float,
    rho: float | None,
    split_w: float | None,
    margin_rule: str,
    contraction_rule: str,
) -> float:
    """Certified constant max(contraction part, margin part), in closed form.

    When rho is tied to the order ((1-rho)(p+1) = 1) and the split weight is
    the default, the algebraically simplified expressions are used so the
    headline constants come out bit-exact.
    """
    r = rho_for_order(p) if rho is None else rho
    k = k_factor(r)
    denom = 1.0 if rho is None else (1.0 - r) * (p + 1.0)
    w_boost = 1.0 if split_w is None else 0.5 / (split_w * split_w)

    if contraction_rule == "paper":
        c_contr = 240.0
    else:
        c_contr = 16.0 * w_boost * k ** (p + 1.0) / denom

    if margin_rule == "margin-64":
        c_margin = 128.0 / denom
    else:
        c_margin = 4.0 * (2.0 - r) ** 2 / (r**3) / denom

    return max(c_contr, c_margin)


def make_certificate(
    p: float,
    *,
    contraction_rule: str = "paper",
    margin_rule: str = "margin-64",
    rho: float | None = None,
    split_w: float | None = None,
    A: float = 1.0,
    B: float = 1.0,
    delta: float | None = None,
) -> Certificate:
    """Build and validate a certificate for lifting moments past order p.

    rho/split_w default to the order-tied choices (pass explicit values only
    together with exact contraction; the printed contraction bound is only
    valid for the defaults).  When ``delta`` is given, the chain is checked at
    that value (e.g. delta = 0 for an exactly-correlated Gaussian pair);
    otherwise the steps are recorded at the witness just inside the certified
    range of the returned constant.
    """
    if not (p > 1.0):
        raise ValueError(f"need p > 1, got {p}")
    if margin_rule not in _MARGIN_RULES:
        raise ValueError(f"margin_rule must be one of {_MARGIN_RULES}, got {margin_rule!r}")
    if contraction_rule not in _CONTRACTION_RULES:
        raise ValueError(
            f"contraction_rule must be one of {_CONTRACTION_RULES}, got {contraction_rule!r}"
        )
    if contraction_rule == "paper" and (rho is not None or split_w is not None):
        raise ValueError(
            "the printed contraction bound applies only to the default rho and split weight"
        )

    r = rho_for_order(p) if rho is None else rho
    if not (0.0 < r < 1.0):
        raise ValueError(f"rho must lie in (0, 1), got {r}")
    k = k_factor(r)
    constant = _constant_closed_form(p, rho, split_w, margin_rule, contraction_rule)
    if delta is None:
        delta = (2.0 / (constant * (p + 1.0))) * _WITNESS

    chain = ChainParams(p=p, rho=r, delta=delta, K=k, A=A, B=B)
    tb = tail_recursion_coeffs(chain, split_w=split_w, margin_rule=margin_rule)

    if contraction_rule == "paper":
        contr_value = 120.0 * delta * (p + 1.0)
    else:
        contr_value = tb.q * k ** (p + 1.0)
    contr = Step("contraction", contr_value, 1.0, contr_value < 1.0)

    steps = tb.steps + (contr,)
    failed = next((s.name for s in steps if not s.passed), None)
    return Certificate(
        chain=chain,
        c1=tb.c1,
        c2=tb.c2,
        q=tb.q,
        constant=constant,
        valid=failed is None,
        failed_step=failed,
        steps=steps,
        delta_rule=margin_rule,
        contraction_rule=contraction_rule,
        split_w=split_w,
        rho_tied=rho is None,
    )


def replay_certificate(cert: Certificate) -> Certificate:
    """Re-derive a certificate from its recorded parameters.

    A valid certificate must replay to an identical one (same coefficients,
    same step margins, same verdict).
    """
    return make_certificate(
        cert.chain.p,
        contraction_rule=cert.contraction_rule,
        margin_rule=cert.delta_rule,
        rho=None if cert.rho_tied else cert.chain.rho,
        split_w=cert.split_w,
        A=cert.chain.A,
        B=cert.chain.B,
        delta=cert.chain.delta,
    )


_KNOBS = ("exact-k", "exact-margin", "rho", "split")


def optimize_constant(
    p: float,
    knobs: Iterable[str] = (),
    budget: int = 2048,
    seed: int = 0,
) -> Certificate:
    """Search the chain's free parameters for the smallest certified constant.

    Knobs:
      exact-k      evaluate the contraction with the exact K^(p+1)
      exact-margin use the exact split-admissibility margin instead of 1/64
      rho          free the correlation from the order-tied default
      split        free the overlap-split weight (<= 1/sqrt(2))

    rho/split only take effect together with exact-k: the printed contraction
    bound is tied to the default choices, so without exact-k those knobs
    cannot move the constant.

    An empty knob set reproduces the printed certificate (constant 240).
    Every candidate is re-validated through the full step chain before
    acceptance.  The search is a deterministic coarse grid with local
    refinement; ties break lexicographically on (constant, rho, w), so the
    result does not depend on evaluation order or on the seed (recorded for
    interface stability only).
    """
    knob_set = frozenset(knobs)
    unknown = knob_set - frozenset(_KNOBS)
    if unknown:
        raise ValueError(f"unknown knobs: {sorted(unknown)}")
    if budget < 1:
        raise ValueError("budget must be >= 1")

    contraction_rule = "exact" if "exact-k" in knob_set else "paper"
    margin_rule = "margin-exact" if "exact-margin" in knob_set else "margin-64"
    free_rho = "rho" in knob_set and contraction_rule == "exact"
    free_split = "split" in knob_set and contraction_rule == "exact"

    evaluations = 0

    def candidate(rho: float | None, w: float | None) -> Certificate | None:
        nonlocal evaluations
        if evaluations >= budget:
            return None
        evaluations += 1
        try:
            return make_certificate(
                p, contraction_rule=contraction_rule, margin_rule=margin_rule,
                rho=rho, split_w=w,
            )
        except ValueError:
            return None

    def keyed(cert: Certificate) -> tuple:
        w = DEFAULT_SPLIT if cert.split_w is None else cert.split_w
        return (cert.constant, cert.chain.rho, w)

    best = candidate(None, None)
    if not knob_set:
        return best

    def consider(rho: float | None, w: float | None) -> None:
        nonlocal best
        cert = candidate(rho, w)
        if cert is not None and cert.valid:
            if best is None or not best.valid or keyed(cert) < keyed(best):
                best = cert

    rho_grid = [None]
    if free_rho:
        rho_grid += [0.52 + i * (0.478 / 40.0) for i in range(41)]
    w_grid = [None]
    if free_split:
        w_grid += [0.15 + i * ((DEFAULT_SPLIT - 0.15) / 20.0) for i in range(20)]

    for r in rho_grid:
        for w in w_grid:
            consider(r, w)

    if free_rho or free_split:
        rho_span = 0.478 / 40.0
        w_span = (DEFAULT_SPLIT - 0.15) / 20.0
        for _ in range(4):
            b_rho = best.chain.rho
            b_w = DEFAULT_SPLIT if best.split_w is None else best.split_w
            rhos = [None]
            if free_rho:
                rhos += [
                    min(0.99995, max(0.5005, b_rho + f * rho_span))
                    for f in (-1.0, -0.5, -0.25, 0.25, 0.5, 1.0)
                ]
            ws = [None]
            if free_split:
                ws += [
                    min(DEFAULT_SPLIT, max(0.02, b_w + f * w_span))
                    for f in (-1.0, -0.5, -0.25, 0.25, 0.5, 1.0)
                ]
            for r in rhos:
                for w in ws:
                    consider(r, w)
            rho_span *= 0.25
            w_span *= 0.25

    return best


def ladder(p0: float) -> list[float]:
    """Ascending moment orders visited by the one-order-per-step recursion.

    Steps down from p0 in unit decrements until the order drops to 2 or
    below (square integrability is assumed, so nothing below 2 needs
    lifting); empty for p0 <= 2.
    """
    if not math.isfinite(p0) or p0 <= 0.0:
        raise ValueError(f"need finite p0 > 0, got {p0}")
    if p0 <= 2.0:
        return []
    big_k = math.ceil(p0 - 2.0)
    return [p0 - k for k in range(big_k, -1, -1)]
