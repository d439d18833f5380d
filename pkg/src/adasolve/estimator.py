"""Complexity-profile estimation backends.

Five interchangeable backends produce a ComplexityProfile for any text
(whole question or single step):

* ``remote``          - a served fine-tuned profile-prediction model
* ``vanilla-io``      - plain instruction prompting of a general model
* ``few-shot-3``      - the same with three worked exemplars
* ``cot-self-assess`` - step-by-step self-assessment prompting
* ``heuristic``       - deterministic offline rules, no model at all

The model-backed kinds differ only in the prompt; all request one JSON
object with the 30 schema fields, parse it the same way, and may issue at
most two repair prompts restating the schema. Estimator calls always run
at temperature 0 so profiles are stable across reruns.

Heuristic rules (deterministic; identical text gives identical profile):

* numerals are matched by ``-?\\d[\\d,]*(\\.\\d+)?``; words by
  ``[A-Za-z]+('[A-Za-z]+)?``; sentences split on runs of ``.!?``.
* four operation-cue word sets (add/sub/mul/div, below) plus the symbols
  ``+``, ``*``/``x-between-spaces`` excluded, ``/`` between digits;
  ``operations`` = number of cue kinds present. "total" is deliberately
  not an addition cue: it names the question target, not an operation.
* ``steps`` = 0 with no numerals, else max(1, numeral_count - 1).
* ``vars`` = question-clause count ('?' occurrences, else one if an
  interrogative cue appears).
* ``entities`` = distinct capitalized words (length >= 2) that do not
  open a sentence; duplicates collapse, so repeating text leaves the
  count unchanged.
* ``estimated_steps`` = clamp(ceil((steps + operations) / 2), 1, 8).
* ``trap_level`` = min(10, 2 * contrast/restriction cue hits).
* ``difficulty`` = min(10, 0.5*numerals + operations + 0.5*sentences
  + question_clauses).
* ``f_7B`` = min(0.95, 0.05*steps + 0.06*difficulty);
  ``f_1_5B`` = min(1, f_7B + 0.15).
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from enum import Enum

from .llmclient import ChatRequest, LLMClient, TokenUsage, ZERO_USAGE
from .profile import (
    FEATURE_KINDS,
    FEATURE_NAMES,
    ComplexityProfile,
    ProfileValidationError,
    validate_profile,
)
from .templates import TEMPLATE_VERSION, load_template, render

MAX_REPAIR_PROMPTS = 2
ESTIMATE_MAX_TOKENS = 768


class EstimatorKind(str, Enum):
    REMOTE = "remote"
    VANILLA_IO = "vanilla-io"
    FEW_SHOT_3 = "few-shot-3"
    COT_SELF_ASSESS = "cot-self-assess"
    HEURISTIC = "heuristic"


MODEL_BACKED_KINDS = frozenset(
    {
        EstimatorKind.REMOTE,
        EstimatorKind.VANILLA_IO,
        EstimatorKind.FEW_SHOT_3,
        EstimatorKind.COT_SELF_ASSESS,
    }
)

_TEMPLATE_BY_KIND = {
    EstimatorKind.REMOTE: "estimate_remote",
    EstimatorKind.VANILLA_IO: "estimate_vanilla_io",
    EstimatorKind.FEW_SHOT_3: "estimate_few_shot_3",
    EstimatorKind.COT_SELF_ASSESS: "estimate_cot_self_assess",
}


class NoObjectFoundError(ValueError):
    """The response contains no well-formed JSON object."""


class EstimateParseError(RuntimeError):
    """Response stayed unparseable after the repair prompts."""

    def __init__(self, raw_response: str, repair_attempts: int, cause: Exception):
        super().__init__(f"unparseable after {repair_attempts} repair prompt(s): {cause}")
        self.raw_response = raw_response
        self.repair_attempts = repair_attempts


@dataclass(frozen=True)
class EstimatorBackend:
    kind: EstimatorKind
    endpoint: LLMClient | None = None
    prompt_template_id: str = TEMPLATE_VERSION
    feature_mask: frozenset[str] | None = None

    def __post_init__(self):
        if self.kind in MODEL_BACKED_KINDS and self.endpoint is None:
            raise ValueError(f"estimator kind {self.kind.value!r} requires an endpoint")
        if self.kind is EstimatorKind.HEURISTIC and self.endpoint is not None:
            raise ValueError("the heuristic estimator takes no endpoint")

    @property
    def label(self) -> str:
        if self.feature_mask:
            return f"{self.kind.value}-mask:{','.join(sorted(self.feature_mask))}"
        return self.kind.value


@dataclass(frozen=True)
class EstimateResult:
    profile: ComplexityProfile
    raw_response: str
    repair_attempts: int
    token_usage: TokenUsage


def _schema_description() -> str:
    constraint = {
        "count": "integer >= 0",
        "count1": "integer >= 1",
        "rating": "number in [0, 10]",
        "prob": "number in [0, 1]",
        "real": "number",
    }
    return "\n".join(f'- "{name}": {constraint[FEATURE_KINDS[name]]}' for name in FEATURE_NAMES)


def _first_json_object(text: str) -> dict:
    for start, ch in enumerate(text):
        if ch != "{":
            continue
        depth = 0
        for end in range(start, len(text)):
            if text[end] == "{":
                depth += 1
            elif text[end] == "}":
                depth -= 1
                if depth == 0:
                    try:
                        obj = json.loads(text[start : end + 1])
                    except ValueError:
                        break
                    if isinstance(obj, dict):
                        return obj
                    break
        continue
    raise NoObjectFoundError("no JSON object found in response")


def parse_profile_response(raw: str) -> ComplexityProfile:
    """Extract and validate the first 30-field object in a model response.

    A trailing "schema" key is tolerated and ignored. Raises
    NoObjectFoundError or ProfileValidationError.
    """
    obj = _first_json_object(raw or "")
    return validate_profile({k: v for k, v in obj.items() if k != "schema"})


# --- heuristic rules ------------------------------------------------------

_NUMERAL_RE = re.compile(r"-?\d[\d,]*(?:\.\d+)?")
_WORD_RE = re.compile(r"[A-Za-z]+(?:'[A-Za-z]+)?")
_WORD_OR_STOP_RE = re.compile(r"[A-Za-z]+(?:'[A-Za-z]+)?|[.!?]")
_SENTENCE_SPLIT_RE = re.compile(r"[.!?]+")
_DIGIT_SLASH_RE = re.compile(r"\d\s*/\s*\d")
_INTERROGATIVE_RE = re.compile(
    r"\b(?:how many|how much|how long|how far|what|find|calculate|determine)\b"
)

ADD_CUES = frozenset(
    "sum plus altogether combined add adds added gain gained gains increase increased together".split()
)
SUB_CUES = frozenset(
    "left remain remains remained remaining fewer less difference minus lost lose loses spent decrease decreased subtract".split()
)
MUL_CUES = frozenset(
    "each every times twice double doubled triple tripled product multiply multiplied".split()
)
DIV_CUES = frozenset(
    "per split splits share shared divide divided average ratio half halves evenly quarter".split()
)
TRAP_CUES = frozenset(
    "but however except only although though while whereas instead unless if rest".split()
)
CONDITIONAL_CUES = frozenset("if when unless suppose supposing assuming given".split())
COMPARATIVE_CUES = frozenset("more less fewer greater smaller than most least".split())
UNIT_CUES = frozenset(
    (
        "mile miles meter meters metre metres kilometer kilometers km kilogram kilograms kg "
        "gram grams liter liters litre litres gallon gallons inch inches foot feet yard yards "
        "ounce ounces cup cups pound pounds"
    ).split()
)
TIME_CUES = frozenset(
    "hour hours minute minutes second seconds day days week weeks month months year years am pm".split()
)
RATE_CUES = frozenset("per rate rates speed speeds".split())
FRACTION_CUES = frozenset("half halves third thirds quarter quarters fourth fourths fifth fifths".split())


def _capitalized_non_initial(text: str) -> set[str]:
    entities: set[str] = set()
    at_sentence_start = True
    for m in _WORD_OR_STOP_RE.finditer(text):
        tok = m.group(0)
        if tok in (".", "!", "?"):
            at_sentence_start = True
            continue
        if not at_sentence_start and len(tok) >= 2 and tok[0].isupper():
            entities.add(tok)
        at_sentence_start = False
    return entities


def heuristic_features(text: str) -> ComplexityProfile:
    """Deterministic surface-feature profile; see the module docstring."""
    if not text or not text.strip():
        raise ValueError("text must be non-empty")

    numerals = _NUMERAL_RE.findall(text)
    words = _WORD_RE.findall(text)
    lower_words = [w.lower() for w in words]
    sentences = [s for s in _SENTENCE_SPLIT_RE.split(text) if s.strip()]
    lower_text = text.lower()

    def hits(cues: frozenset[str]) -> int:
        return sum(1 for w in lower_words if w in cues)

    add_hits = hits(ADD_CUES) + text.count("+")
    sub_hits = hits(SUB_CUES)
    mul_hits = hits(MUL_CUES) + text.count("*") + text.count("×")
    div_hits = hits(DIV_CUES) + text.count("÷") + len(_DIGIT_SLASH_RE.findall(text))
    operations = sum(1 for h in (add_hits, sub_hits, mul_hits, div_hits) if h > 0)

    numeral_count = len(numerals)
    steps = 0 if numeral_count == 0 else max(1, numeral_count - 1)

    question_clauses = text.count("?")
    if question_clauses == 0 and _INTERROGATIVE_RE.search(lower_text):
        question_clauses = 1

    trap_hits = hits(TRAP_CUES)
    trap_level = min(10.0, 2.0 * trap_hits)
    difficulty = min(
        10.0,
        0.5 * numeral_count + 1.0 * operations + 0.5 * len(sentences) + 1.0 * question_clauses,
    )
    f_7b = min(0.95, 0.05 * steps + 0.06 * difficulty)
    f_1_5b = min(1.0, f_7b + 0.15)

    plain_numerals = [n.replace(",", "") for n in numerals]
    magnitudes = [abs(float(n)) for n in plain_numerals]

    values = {
        "operations": operations,
        "steps": steps,
        "vars": question_clauses,
        "entities": len(_capitalized_non_initial(text)),
        "estimated_steps": max(1, min(8, math.ceil((steps + operations) / 2))),
        "trap_level": trap_level,
        "difficulty": difficulty,
        "f_1_5B": f_1_5b,
        "f_7B": f_7b,
        "word_count": len(words),
        "sentence_count": len(sentences),
        "char_count": len(text),
        "numeral_count": numeral_count,
        "distinct_numeral_count": len(set(plain_numerals)),
        "max_numeral_magnitude": max(magnitudes) if magnitudes else 0.0,
        "decimal_numeral_count": sum(1 for n in plain_numerals if "." in n),
        "currency_mention_count": text.count("$")
        + hits(frozenset("dollar dollars cent cents euro euros".split())),
        "percent_mention_count": text.count("%") + hits(frozenset(("percent", "percentage"))),
        "unit_mention_count": hits(UNIT_CUES),
        "time_mention_count": hits(TIME_CUES),
        "rate_mention_count": hits(RATE_CUES),
        "fraction_mention_count": hits(FRACTION_CUES) + len(_DIGIT_SLASH_RE.findall(text)),
        "question_clause_count": question_clauses,
        "conditional_clause_count": hits(CONDITIONAL_CUES),
        "comparative_count": hits(COMPARATIVE_CUES),
        "add_cue_count": add_hits,
        "sub_cue_count": sub_hits,
        "mul_cue_count": mul_hits,
        "div_cue_count": div_hits,
        "avg_word_length": (sum(len(w) for w in words) / len(words)) if words else 0.0,
    }
    return validate_profile(values)


# --- estimation entry point -----------------------------------------------


def estimate(
    text: str,
    backend: EstimatorBackend,
    *,
    seed: int | None = None,
    max_tokens: int = ESTIMATE_MAX_TOKENS,
) -> EstimateResult:
    """Produce a validated profile for question or step text.

    Model-backed kinds prompt their endpoint for a structured 30-field
    JSON object and parse it, issuing at most MAX_REPAIR_PROMPTS repair
    prompts before failing with EstimateParseError (the raw response is
    kept for diagnostics). The heuristic kind computes the profile
    locally at zero token cost.
    """
    if not text or not text.strip():
        raise ValueError("text must be non-empty")
    if backend.kind is EstimatorKind.HEURISTIC:
        return EstimateResult(
            profile=heuristic_features(text),
            raw_response="",
            repair_attempts=0,
            token_usage=ZERO_USAGE,
        )

    assert backend.endpoint is not None
    schema = _schema_description()
    template = load_template(_TEMPLATE_BY_KIND[backend.kind], version=backend.prompt_template_id)
    prompt = render(template, question=text, schema_fields=schema)
    repair_template = load_template("estimate_repair", version=backend.prompt_template_id)

    usage = ZERO_USAGE
    raw = ""
    repairs = 0
    request = ChatRequest.user(prompt, temperature=0.0, max_tokens=max_tokens, seed=seed)
    last_error: Exception | None = None
    for round_index in range(1 + MAX_REPAIR_PROMPTS):
        response = backend.endpoint.complete(request)
        usage = usage + response.usage
        raw = response.text
        try:
            profile = parse_profile_response(raw)
        except (NoObjectFoundError, ProfileValidationError) as exc:
            last_error = exc
            if round_index == MAX_REPAIR_PROMPTS:
                break
            repairs += 1
            repair_prompt = render(repair_template, previous=raw, schema_fields=schema)
            request = ChatRequest.user(repair_prompt, temperature=0.0, max_tokens=max_tokens, seed=seed)
            continue
        return EstimateResult(
            profile=profile, raw_response=raw, repair_attempts=repairs, token_usage=usage
        )
    assert last_error is not None
    raise EstimateParseError(raw, repairs, last_error)
