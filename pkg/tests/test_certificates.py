import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qharness.certificates import (
    Certificate,
    ChainParams,
    DEFAULT_SPLIT,
    embedding,
    integrability_constant,
    k_factor,
    ladder,
    make_certificate,
    moment_lift_check,
    optimize_constant,
    replay_certificate,
    rho_for_order,
    tail_recursion_coeffs,
)

orders = st.floats(min_value=1.01, max_value=500.0)


class TestRhoAndK:
    @pytest.mark.parametrize("p,rho", [(3.0, 0.75), (9.0, 0.9)])
    def test_rho_examples(self, p, rho):
        assert rho_for_order(p) == pytest.approx(rho)

    def test_rho_boundary_rejected(self):
        with pytest.raises(ValueError):
            rho_for_order(1.0)

    @pytest.mark.parametrize("rho,k", [(0.75, 5 / 3), (1.0, 1.0), (0.5, 3.0)])
    def test_k_examples(self, rho, k):
        assert k_factor(rho) == pytest.approx(k)

    def test_k_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            k_factor(0.0)

    @given(orders)
    def test_composition_identity(self, p):
        assert k_factor(rho_for_order(p)) == pytest.approx((p + 2.0) / p, rel=1e-12)

    def test_k_power_bounded_and_decreasing(self):
        ps = np.logspace(math.log10(1.01), 4, 200)
        powers = [k_factor(rho_for_order(p)) ** (p + 1.0) for p in ps]
        assert all(v < 2.0 * math.e**2 for v in powers)
        assert all(a > b for a, b in zip(powers, powers[1:]))
        assert powers[-1] > math.e**2  # decreasing toward e^2 from above


class TestEmbedding:
    def test_equal_coefficients(self):
        emb = embedding(2.0, 2.0, 0.75)
        assert emb.s == pytest.approx(0.75) and emb.t == pytest.approx(4 / 3)

    def test_delta(self):
        assert embedding(1.0, 1.0, 0.75).delta == pytest.approx(2.0)

    @given(st.floats(1e-6, 1e3), st.floats(1e-6, 1e3), st.floats(0.501, 0.999))
    def test_correlation_recovered(self, sigma, tau, rho):
        emb = embedding(sigma, tau, rho)
        assert emb.check_rho == pytest.approx(rho, abs=1e-14)
        assert emb.s < emb.t

    def test_degenerate_product_rejected(self):
        with pytest.raises(ValueError):
            embedding(0.0, 1.0, 0.75)


class TestTailRecursionCoeffs:
    def test_q_value(self):
        chain = ChainParams(p=3.0, rho=0.75, delta=0.001, K=k_factor(0.75))
        tb = tail_recursion_coeffs(chain)
        assert tb.q == pytest.approx(0.032)
        assert tb.valid

    def test_zero_delta(self):
        chain = ChainParams(p=3.0, rho=0.75, delta=0.0, K=k_factor(0.75))
        tb = tail_recursion_coeffs(chain)
        assert tb.q == 0.0 and tb.valid
        assert math.isfinite(tb.c1) and math.isfinite(tb.c2)

    def test_margin_boundary_invalid(self):
        rho = 0.75
        chain = ChainParams(p=3.0, rho=rho, delta=(1 - rho) / 64, K=k_factor(rho))
        tb = tail_recursion_coeffs(chain)
        assert not tb.valid and tb.failed_step == "delta-margin"

    def test_explicit_coefficients_at_default_split(self):
        a_big, b_lin = 2.5, 0.7
        rho, delta = 0.8, 0.001
        u = 1.0 - rho
        chain = ChainParams(p=4.0, rho=rho, delta=delta, K=k_factor(rho), A=a_big, B=b_lin)
        tb = tail_recursion_coeffs(chain)
        assert tb.c1 == pytest.approx(4 * a_big / u**2 + 2 * a_big / u**4, rel=1e-12)
        a_split = math.sqrt(2 * delta * rho * u)
        assert tb.c2 == pytest.approx(4 * b_lin / u**2 + b_lin / (a_split * u**2), rel=1e-12)
        assert tb.q == pytest.approx(8 * delta / u, rel=1e-12)

    def test_rho_out_of_range_invalid(self):
        chain = ChainParams(p=3.0, rho=0.4, delta=0.0, K=k_factor(0.4))
        tb = tail_recursion_coeffs(chain)
        assert not tb.valid and tb.failed_step == "rho-lower"


class TestMomentLift:
    def test_printed_condition_pass(self):
        res = moment_lift_check(3.0, 0.002, "paper")
        assert res.passed and res.value == pytest.approx(0.96)

    def test_printed_condition_boundary_fails(self):
        res = moment_lift_check(3.0, 1.0 / 480.0, "paper")
        assert res.value == pytest.approx(1.0) and not res.passed

    def test_exact_coefficient(self):
        res = moment_lift_check(4.0, 0.0, "exact")
        assert res.coefficient == pytest.approx(8 * 5 * 1.5**5)
        assert res.coefficient == 303.75

    @given(orders, st.floats(0.0, 0.01))
    def test_printed_pass_implies_exact_pass(self, p, delta):
        paper = moment_lift_check(p, delta, "paper")
        exact = moment_lift_check(p, delta, "exact")
        if paper.passed:
            assert exact.passed
        assert exact.value <= paper.value + 1e-12


class TestIntegrabilityConstant:
    @pytest.mark.parametrize("p", [2.0, 3.0, 4.0, 10.0, 100.0])
    def test_printed_constant(self, p):
        assert integrability_constant("paper", p) == 240.0

    def test_exact_p4(self):
        assert integrability_constant("exact", 4.0) == 128.0

    @given(orders)
    def test_exact_never_above_printed(self, p):
        assert integrability_constant("exact", p) <= 240.0

    @given(orders)
    def test_exact_closed_form(self, p):
        k = (p + 2.0) / p
        assert integrability_constant("exact", p) == pytest.approx(
            max(16.0 * k ** (p + 1.0), 128.0), rel=1e-12
        )

    def test_limit_is_margin_bound(self):
        # 16 K^(p+1) decreases toward 16 e^2 < 128, so the margin wins
        assert integrability_constant("exact", 1e6) == 128.0


class TestCertificates:
    def test_paper_certificate(self):
        cert = make_certificate(4.0, contraction_rule="paper")
        assert cert.constant == 240.0 and cert.valid and cert.failed_step is None
        u = 1.0 - cert.chain.rho
        assert cert.q == pytest.approx(8 * cert.chain.delta / u, rel=1e-12)

    def test_exact_certificate(self):
        cert = make_certificate(4.0, contraction_rule="exact")
        assert cert.constant == 128.0 and cert.valid

    def test_valid_implies_contraction_below_one(self):
        for p in (2.5, 3.0, 4.0, 8.0, 40.0):
            for rule in ("paper", "exact"):
                cert = make_certificate(p, contraction_rule=rule)
                assert cert.valid and cert.q < 1.0
                names = [s.name for s in cert.steps]
                assert names[-1] == "contraction" and cert.steps[-1].passed

    def test_delta_beyond_margin_invalid(self):
        cert = make_certificate(4.0, contraction_rule="exact", delta=0.1)
        assert not cert.valid and cert.failed_step == "delta-margin"

    def test_json_round_trip(self):
        cert = make_certificate(8.0, contraction_rule="exact", margin_rule="margin-exact")
        blob = json.dumps(cert.to_json_dict())
        assert Certificate.from_json_dict(json.loads(blob)) == cert

    def test_replay_identical(self):
        for kwargs in (
            {"contraction_rule": "paper"},
            {"contraction_rule": "exact"},
            {"contraction_rule": "exact", "margin_rule": "margin-exact"},
            {"contraction_rule": "exact", "rho": 0.9, "split_w": 0.5},
        ):
            cert = make_certificate(6.0, **kwargs)
            assert replay_certificate(cert) == cert

    def test_paper_rule_requires_default_rho(self):
        with pytest.raises(ValueError):
            make_certificate(4.0, contraction_rule="paper", rho=0.9)

    def test_gaussian_pair_chain(self):
        # exactly-correlated Gaussian pair: A = 1 - rho^2, B = 0, delta = 0
        for rho in (0.6, 0.75, 0.9):
            cert = make_certificate(
                3.0, contraction_rule="exact", rho=rho, A=1 - rho**2, B=0.0, delta=0.0
            )
            assert cert.valid
            u = 1.0 - rho
            expect_c1 = 4 * (1 - rho**2) / u**2 + 2 * (1 - rho**2) / u**4
            assert cert.c1 == pytest.approx(expect_c1, rel=1e-12)
            assert cert.c2 == 0.0 and cert.q == 0.0


class TestOptimizer:
    def test_empty_knobs_reproduces_printed_constant(self):
        cert = optimize_constant(4.0, [])
        assert cert.constant == 240.0 and cert.valid

    @pytest.mark.parametrize("p", [3.0, 4.0, 8.0, 16.0, 32.0])
    def test_exact_k_knob(self, p):
        cert = optimize_constant(p, ["exact-k"])
        assert cert.valid and cert.constant < 240.0
        assert replay_certificate(cert) == cert

    @pytest.mark.parametrize("p", [16.0, 32.0])
    def test_exact_margin_drops_below_128(self, p):
        cert = optimize_constant(p, ["exact-k", "exact-margin"])
        assert cert.valid and cert.constant < 128.0

    def test_free_rho_improves(self):
        base = optimize_constant(8.0, ["exact-k", "exact-margin"])
        freed = optimize_constant(8.0, ["exact-k", "exact-margin", "rho"])
        assert freed.valid and freed.constant < base.constant
        assert replay_certificate(freed) == freed

    def test_split_knob_stays_at_boundary(self):
        # the split weight is capped at 1/sqrt(2) and the constant improves
        # monotonically toward it, so freeing it cannot beat the default
        tied = optimize_constant(8.0, ["exact-k", "exact-margin", "rho"])
        freed = optimize_constant(8.0, ["exact-k", "exact-margin", "rho", "split"])
        assert freed.constant <= tied.constant + 1e-9
        w = freed.split_w if freed.split_w is not None else DEFAULT_SPLIT
        assert w == pytest.approx(DEFAULT_SPLIT, abs=1e-6)

    def test_deterministic(self):
        a = optimize_constant(5.0, ["exact-k", "exact-margin", "rho", "split"])
        b = optimize_constant(5.0, ["exact-k", "exact-margin", "rho", "split"])
        assert a == b

    def test_unknown_knob_rejected(self):
        with pytest.raises(ValueError):
            optimize_constant(4.0, ["turbo"])


class TestLadder:
    def test_examples(self):
        assert ladder(4.5) == [1.5, 2.5, 3.5, 4.5]
        assert ladder(2.0) == []
        assert ladder(3.0) == [2.0, 3.0]

    @given(st.floats(2.0 + 1e-9, 500.0))
    def test_structure(self, p0):
        steps = ladder(p0)
        assert steps[-1] == p0
        assert steps[0] <= 2.0
        if len(steps) > 1:
            assert steps[1] > 2.0
            assert all(b - a == pytest.approx(1.0) for a, b in zip(steps, steps[1:]))

    def test_invalid_rejected(self):
        with pytest.raises(ValueError):
            ladder(0.0)
