import json
from pathlib import Path

import pytest

from adasolve.profile import FEATURE_NAMES, validate_profile

DATA_DIR = Path(__file__).parent / "data"

# Valid everywhere: a minimal in-range slot assignment.
_BASE_RAW = {
    "operations": 1,
    "steps": 1,
    "vars": 1,
    "entities": 0,
    "estimated_steps": 1,
    "trap_level": 0.0,
    "difficulty": 0.0,
    "f_1_5B": 0.0,
    "f_7B": 0.0,
}
_BASE_RAW.update({name: 0 for name in FEATURE_NAMES if name not in _BASE_RAW})


def base_raw(**overrides):
    raw = dict(_BASE_RAW)
    raw.update(overrides)
    return raw


def make_profile(**overrides):
    return validate_profile(base_raw(**overrides))


def raw_for_rho(rho_target, estimated_steps=1):
    """Slot assignment whose default-weight score is ~rho_target.

    steps takes floor(rho); the remainder is split evenly over trap_level,
    difficulty, and the scaled failure probability.
    """
    s = min(10, int(rho_target))
    rest = rho_target - 0.3 * s
    y = rest / 0.7
    assert 0.0 <= y <= 10.0, f"cannot hit rho {rho_target} with steps={s}"
    return base_raw(
        steps=s,
        trap_level=y,
        difficulty=y,
        f_7B=y / 10.0,
        f_1_5B=min(1.0, y / 10.0),
        estimated_steps=estimated_steps,
    )


def profile_reply(rho_target, estimated_steps=1):
    """JSON text for a scripted estimator reply hitting ~rho_target."""
    return json.dumps(raw_for_rho(rho_target, estimated_steps))


def load_golden(name):
    return json.loads((DATA_DIR / f"heuristic_{name}.json").read_text())


@pytest.fixture
def bakery_golden():
    return load_golden("bakery")


@pytest.fixture
def multirate_golden():
    return load_golden("multirate")
