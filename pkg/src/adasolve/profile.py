"""Complexity profiles and the normalized complexity score.

A profile is a fixed 30-slot feature vector describing one reasoning
problem (or one decomposition step). Nine slots are load-bearing: the
scorer reads ``steps``, ``trap_level``, ``difficulty`` and one of the
calibrated failure probabilities; the engine reads ``estimated_steps``.
The remaining 21 slots are auxiliary surface features with a fixed,
registered order so that profiles have a stable wire format.

The score ``rho`` is a weighted average of four features brought onto a
common 0-10 scale: ``steps`` is clamped into [0, 10] and the failure
probability is multiplied by 10 before weighting, so the result provably
stays in [0, 10].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

PROFILE_SCHEMA_VERSION = "profile-v1"

# Slot kinds: how a value is range-checked.
#   count   - integer >= 0
#   count1  - integer >= 1
#   rating  - real in [0, 10]
#   prob    - real in [0, 1]
#   real    - any finite real
_NAMED_SLOTS = (
    ("operations", "count"),
    ("steps", "count"),
    ("vars", "count"),
    ("entities", "count"),
    ("estimated_steps", "count1"),
    ("trap_level", "rating"),
    ("difficulty", "rating"),
    ("f_1_5B", "prob"),
    ("f_7B", "prob"),
)

_EXTRA_SLOTS = (
    "word_count",
    "sentence_count",
    "char_count",
    "numeral_count",
    "distinct_numeral_count",
    "max_numeral_magnitude",
    "decimal_numeral_count",
    "currency_mention_count",
    "percent_mention_count",
    "unit_mention_count",
    "time_mention_count",
    "rate_mention_count",
    "fraction_mention_count",
    "question_clause_count",
    "conditional_clause_count",
    "comparative_count",
    "add_cue_count",
    "sub_cue_count",
    "mul_cue_count",
    "div_cue_count",
    "avg_word_length",
)

FEATURE_NAMES: tuple[str, ...] = tuple(n for n, _ in _NAMED_SLOTS) + _EXTRA_SLOTS
FEATURE_KINDS: dict[str, str] = {n: k for n, k in _NAMED_SLOTS}
FEATURE_KINDS.update({n: "real" for n in _EXTRA_SLOTS})

assert len(FEATURE_NAMES) == 30

# Feature groups used by the ablation switches.
FEATURE_GROUPS: dict[str, tuple[str, ...]] = {
    "arithmetic": ("operations", "steps"),
    "reasoning_depth": ("vars", "entities", "estimated_steps"),
    "semantic": ("trap_level", "difficulty"),
    "calibration": ("f_1_5B", "f_7B"),
}

# Masking a feature replaces its value with a neutral default so the
# score formula stays well-defined; the scored slots get their range
# midpoints, counts get small typical values.
MASK_DEFAULTS: dict[str, float] = {
    "operations": 1,
    "steps": 3,
    "vars": 1,
    "entities": 1,
    "estimated_steps": 3,
    "trap_level": 5.0,
    "difficulty": 5.0,
    "f_1_5B": 0.5,
    "f_7B": 0.5,
}


class ProfileValidationError(ValueError):
    """A raw feature mapping violates the profile schema."""


class MissingFeatureError(ProfileValidationError):
    """A required feature slot is absent (or an unknown slot is present)."""


class FeatureValueError(ProfileValidationError):
    """A feature value is out of range, the wrong type, or not finite."""

    def __init__(self, slot: str, message: str):
        super().__init__(f"{slot}: {message}")
        self.slot = slot


class ZeroNormalizerError(ValueError):
    """Score weights sum to zero."""


class SolverClass(str, Enum):
    """Which calibrated failure probability enters the score."""

    B1_5 = "1.5B"
    B7 = "7B"


class Tier(str, Enum):
    EASY = "Easy"
    MODERATE = "Moderate"
    HARD = "Hard"


def _check_slot(name: str, value) -> float:
    kind = FEATURE_KINDS[name]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise FeatureValueError(name, f"expected a number, got {value!r}")
    v = float(value)
    if not math.isfinite(v):
        raise FeatureValueError(name, f"not finite: {value!r}")
    if kind in ("count", "count1"):
        if v != int(v):
            raise FeatureValueError(name, f"expected an integer count, got {value!r}")
        low = 1 if kind == "count1" else 0
        if v < low:
            raise FeatureValueError(name, f"must be >= {low}, got {value!r}")
    elif kind == "rating":
        if not 0.0 <= v <= 10.0:
            raise FeatureValueError(name, f"must be in [0, 10], got {value!r}")
    elif kind == "prob":
        if not 0.0 <= v <= 1.0:
            raise FeatureValueError(name, f"must be in [0, 1], got {value!r}")
    return v


@dataclass(frozen=True)
class ComplexityProfile:
    """Validated 30-slot feature vector for a question or step."""

    values: dict[str, float] = field(default_factory=dict)

    @property
    def operations(self) -> int:
        return int(self.values["operations"])

    @property
    def steps(self) -> int:
        return int(self.values["steps"])

    @property
    def vars(self) -> int:
        return int(self.values["vars"])

    @property
    def entities(self) -> int:
        return int(self.values["entities"])

    @property
    def estimated_steps(self) -> int:
        return int(self.values["estimated_steps"])

    @property
    def trap_level(self) -> float:
        return self.values["trap_level"]

    @property
    def difficulty(self) -> float:
        return self.values["difficulty"]

    @property
    def f_1_5B(self) -> float:
        return self.values["f_1_5B"]

    @property
    def f_7B(self) -> float:
        return self.values["f_7B"]

    def as_dict(self) -> dict[str, float]:
        """All 30 features in schema order."""
        return {name: self.values[name] for name in FEATURE_NAMES}

    def to_json_dict(self) -> dict:
        d: dict = {"schema": PROFILE_SCHEMA_VERSION}
        d.update(self.as_dict())
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json_dict(cls, obj: Mapping) -> "ComplexityProfile":
        raw = {k: v for k, v in obj.items() if k != "schema"}
        return validate_profile(raw)


def validate_profile(raw: Mapping[str, object]) -> ComplexityProfile:
    """Validate a raw name->value mapping into a ComplexityProfile.

    All 30 schema slots must be present by name; out-of-range values are
    rejected, never clamped. The offending slot is named in the error.
    """
    missing = [n for n in FEATURE_NAMES if n not in raw]
    if missing:
        raise MissingFeatureError(f"missing feature(s): {', '.join(missing)}")
    unknown = sorted(set(raw) - set(FEATURE_NAMES))
    if unknown:
        raise MissingFeatureError(f"unknown feature(s): {', '.join(unknown)}")
    values = {name: _check_slot(name, raw[name]) for name in FEATURE_NAMES}
    return ComplexityProfile(values=values)


def apply_mask(profile: ComplexityProfile, mask: Iterable[str] | None) -> ComplexityProfile:
    """Replace masked features (or whole groups) with neutral defaults.

    ``mask`` may contain group names from FEATURE_GROUPS and/or individual
    named-slot names. Returns a new profile; the input is untouched.
    """
    if not mask:
        return profile
    slots: set[str] = set()
    for entry in mask:
        if entry in FEATURE_GROUPS:
            slots.update(FEATURE_GROUPS[entry])
        elif entry in MASK_DEFAULTS:
            slots.add(entry)
        else:
            raise KeyError(f"unknown maskable feature or group: {entry!r}")
    values = dict(profile.values)
    for slot in slots:
        values[slot] = float(MASK_DEFAULTS[slot])
    return ComplexityProfile(values=values)


@dataclass(frozen=True)
class ScoreWeights:
    """Weights for (steps, trap_level, difficulty, failure probability)."""

    w_s: float = 0.30
    w_t: float = 0.25
    w_d: float = 0.25
    w_f: float = 0.20

    def __post_init__(self):
        for name in ("w_s", "w_t", "w_d", "w_f"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(float(v)):
                raise ValueError(f"{name} must be a finite number, got {v!r}")
            if v < 0:
                raise ValueError(f"{name} must be nonnegative, got {v!r}")
        if self.Z <= 0:
            raise ZeroNormalizerError("score weights sum to zero")

    @property
    def Z(self) -> float:
        return self.w_s + self.w_t + self.w_d + self.w_f


DEFAULT_WEIGHTS = ScoreWeights()


@dataclass(frozen=True)
class ComplexityScore:
    rho: float
    tier: Tier


def tier_for(rho: float, tau_low: float = 3.0, tau_high: float = 6.0) -> Tier:
    """Easy below tau_low, Hard at or above tau_high, Moderate between."""
    if rho < tau_low:
        return Tier.EASY
    if rho >= tau_high:
        return Tier.HARD
    return Tier.MODERATE


def score(
    profile: ComplexityProfile,
    weights: ScoreWeights = DEFAULT_WEIGHTS,
    solver_class: SolverClass = SolverClass.B7,
    *,
    tau_low: float = 3.0,
    tau_high: float = 6.0,
) -> ComplexityScore:
    """Weighted, normalized complexity score with tier classification.

    rho = (w_s*clamp(steps, 0, 10) + w_t*trap_level + w_d*difficulty
           + w_f*(10*f)) / Z, clamped into [0, 10], where f is the failure
    probability selected by ``solver_class`` (7B-class by default).
    """
    for name in ("steps", "trap_level", "difficulty", "f_1_5B", "f_7B"):
        _check_slot(name, profile.values[name])
    f = profile.f_7B if solver_class is SolverClass.B7 else profile.f_1_5B
    steps_scaled = min(max(float(profile.steps), 0.0), 10.0)
    numerator = (
        weights.w_s * steps_scaled
        + weights.w_t * profile.trap_level
        + weights.w_d * profile.difficulty
        + weights.w_f * (10.0 * f)
    )
    rho = numerator / weights.Z
    rho = min(max(rho, 0.0), 10.0)
    return ComplexityScore(rho=rho, tier=tier_for(rho, tau_low, tau_high))
