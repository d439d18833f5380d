"""Decomposition gate and the three-tier thought-budget function.

Defaults: a problem decomposes when rho >= 3.0; easy steps get a single
thought, moderate steps get ceil(1.5 * rho) thoughts (5-9 under the
default thresholds), hard steps get the full budget of 10.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .profile import Tier, tier_for


@dataclass(frozen=True)
class PolicyParams:
    """Thresholds and scaling for gating and budgets."""

    tau_dec: float = 3.0
    tau_low: float = 3.0
    tau_high: float = 6.0
    alpha: float = 1.5
    B_max: int = 10

    def __post_init__(self):
        if not (math.isfinite(self.tau_dec) and 0.0 <= self.tau_dec <= 10.0):
            raise ValueError(f"tau_dec must be in [0, 10], got {self.tau_dec!r}")
        if not 0.0 <= self.tau_low <= self.tau_high <= 10.0:
            raise ValueError(
                f"need 0 <= tau_low <= tau_high <= 10, got {self.tau_low!r}, {self.tau_high!r}"
            )
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be > 0, got {self.alpha!r}")
        if self.B_max < 1:
            raise ValueError(f"B_max must be >= 1, got {self.B_max!r}")
        if math.ceil(self.alpha * self.tau_low) < 1:
            raise ValueError("alpha * tau_low too small: moderate budgets would drop below 1")


DEFAULT_PARAMS = PolicyParams()


class PolicyKind(str, Enum):
    ADAPTIVE = "adaptive"        # gate + sized decomposition + per-step budgets
    ZERO_SHOT = "zero-shot"      # single direct call
    COT = "cot"                  # single step-by-step call
    FIXED_TIER = "fixed-tier"    # fixed K steps, fixed B thoughts per step


@dataclass(frozen=True)
class SolvePolicy:
    kind: PolicyKind = PolicyKind.ADAPTIVE
    fixed_K: int | None = None
    fixed_B: int | None = None
    params: PolicyParams = field(default_factory=PolicyParams)

    def __post_init__(self):
        if self.kind is PolicyKind.FIXED_TIER:
            k = self.fixed_K if self.fixed_K is not None else 3
            b = self.fixed_B if self.fixed_B is not None else 3
            if k < 1 or b < 1:
                raise ValueError(f"fixed-tier needs K >= 1 and B >= 1, got {k}/{b}")
            object.__setattr__(self, "fixed_K", k)
            object.__setattr__(self, "fixed_B", b)

    @property
    def label(self) -> str:
        if self.kind is PolicyKind.FIXED_TIER:
            return f"fixed-tier-{self.fixed_K}x{self.fixed_B}"
        return self.kind.value


def should_decompose(rho: float, params: PolicyParams = DEFAULT_PARAMS) -> bool:
    """True iff the problem is complex enough to decompose (rho >= tau_dec)."""
    return rho >= params.tau_dec


def thought_budget(rho: float, params: PolicyParams = DEFAULT_PARAMS) -> int:
    """Per-step candidate count: 1 / ceil(alpha*rho) / B_max by tier.

    The moderate branch is additionally capped at B_max so nonstandard
    (alpha, tau_high) settings cannot exceed the hard-tier budget.
    """
    if rho < params.tau_low:
        return 1
    if rho < params.tau_high:
        return min(params.B_max, math.ceil(params.alpha * rho))
    return params.B_max


def tier_of(rho: float, params: PolicyParams = DEFAULT_PARAMS) -> Tier:
    return tier_for(rho, params.tau_low, params.tau_high)
