import math

import pytest
from hypothesis import given, settings, strategies as st

from adasolve.policy import (
    DEFAULT_PARAMS,
    PolicyKind,
    PolicyParams,
    SolvePolicy,
    should_decompose,
    thought_budget,
    tier_of,
)
from adasolve.profile import Tier


class TestParams:
    def test_defaults(self):
        p = PolicyParams()
        assert (p.tau_dec, p.tau_low, p.tau_high, p.alpha, p.B_max) == (3.0, 3.0, 6.0, 1.5, 10)

    def test_invalid_order(self):
        with pytest.raises(ValueError):
            PolicyParams(tau_low=7.0, tau_high=6.0)

    def test_invalid_alpha(self):
        with pytest.raises(ValueError):
            PolicyParams(alpha=0.0)

    def test_moderate_floor_guard(self):
        with pytest.raises(ValueError):
            PolicyParams(tau_low=0.0, tau_high=6.0, alpha=1.5)


class TestGate:
    def test_below(self):
        assert should_decompose(2.9) is False

    def test_boundary_inclusive(self):
        assert should_decompose(3.0) is True

    def test_minimum(self):
        assert should_decompose(0.0) is False


class TestBudget:
    def test_easy(self):
        assert thought_budget(1.0) == 1

    def test_moderate_boundary(self):
        # ceil(1.5 * 3.0) = 5, ceil(1.5 * 5.9) = 9 by hand
        assert thought_budget(3.0) == 5
        assert thought_budget(5.9) == 9

    def test_hard_boundary(self):
        assert thought_budget(6.0) == 10

    def test_moderate_set_is_5_to_9(self):
        # exhaustive fine grid over [3, 6)
        budgets = {thought_budget(3.0 + i / 1000.0) for i in range(3000)}
        assert budgets == {5, 6, 7, 8, 9}

    def test_cap_for_nonstandard_params(self):
        params = PolicyParams(alpha=5.0, B_max=10)
        assert thought_budget(5.9, params) == 10

    @given(st.floats(min_value=0.0, max_value=10.0, allow_nan=False))
    @settings(max_examples=300)
    def test_bounds(self, rho):
        b = thought_budget(rho)
        assert 1 <= b <= DEFAULT_PARAMS.B_max

    @given(
        st.floats(min_value=0.0, max_value=10.0, allow_nan=False),
        st.floats(min_value=0.0, max_value=10.0, allow_nan=False),
    )
    @settings(max_examples=300)
    def test_monotone(self, a, b):
        lo, hi = sorted((a, b))
        assert thought_budget(lo) <= thought_budget(hi)

    @given(st.floats(min_value=0.0, max_value=10.0, allow_nan=False))
    @settings(max_examples=300)
    def test_budget_tier_agreement(self, rho):
        tier = tier_of(rho)
        budget = thought_budget(rho)
        if tier is Tier.EASY:
            assert budget == 1
        elif tier is Tier.HARD:
            assert budget == DEFAULT_PARAMS.B_max
        else:
            lo = math.ceil(DEFAULT_PARAMS.alpha * DEFAULT_PARAMS.tau_low)
            hi = min(DEFAULT_PARAMS.B_max, math.ceil(DEFAULT_PARAMS.alpha * DEFAULT_PARAMS.tau_high))
            assert lo <= budget <= hi


class TestTierOf:
    def test_examples(self):
        assert tier_of(0.0) is Tier.EASY
        assert tier_of(4.15) is Tier.MODERATE
        assert tier_of(9.8) is Tier.HARD


class TestSolvePolicy:
    def test_fixed_tier_defaults(self):
        policy = SolvePolicy(kind=PolicyKind.FIXED_TIER)
        assert policy.fixed_K == 3 and policy.fixed_B == 3
        assert policy.label == "fixed-tier-3x3"

    def test_fixed_tier_rejects_bad_counts(self):
        with pytest.raises(ValueError):
            SolvePolicy(kind=PolicyKind.FIXED_TIER, fixed_K=0, fixed_B=3)

    def test_labels(self):
        assert SolvePolicy(kind=PolicyKind.ADAPTIVE).label == "adaptive"
        assert SolvePolicy(kind=PolicyKind.ZERO_SHOT).label == "zero-shot"
