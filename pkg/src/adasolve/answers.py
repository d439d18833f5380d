"""Answer extraction, canonicalization, and grading.

Canonical forms: integers exact ("42"), rationals as reduced fractions
("1/2"), other decimals to 10 significant digits. Non-numeric answers are
reduced to a compact symbolic string (latex unwrapped, whitespace removed,
implicit multiplication made explicit, e.g. "3\\pi" -> "3*pi"). Two
numeric answers compare with relative tolerance 1e-6; symbolic answers
compare by canonical-string equality. This is deliberately simpler than
full CAS equivalence.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction


class DatasetKind(str, Enum):
    GSM8K = "gsm8k"
    MATH500 = "math500"
    CUSTOM = "custom"


@dataclass(frozen=True)
class CanonicalAnswer:
    """Canonical text plus the exact rational value when the answer is numeric."""

    text: str
    value: Fraction | None = None

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True)
class GradeResult:
    correct: bool
    extracted: str | None
    normalization_notes: tuple[str, ...] = ()


# A minus sign only binds when not glued to a preceding word char or dot,
# so "5-3" yields 5 and 3, while " -3" yields -3.
_NUM_RE = re.compile(r"(?<![\w.])-\d+(?:\.\d+)?|\d+(?:\.\d+)?")
_INT_RE = re.compile(r"^[+-]?\d+$")
_DECIMAL_RE = re.compile(r"^[+-]?(?:\d+\.\d*|\.\d+)$")
_SCI_RE = re.compile(r"^[+-]?\d+(?:\.\d+)?[eE][+-]?\d+$")
_FRACTION_RE = re.compile(r"^([+-]?)\(?(\d+)\)?\s*/\s*\(?(\d+)\)?$")
_MARKER_RE = re.compile(r"(?:final\s+answer|answer)\s*[:=]\s*([^\n]+)", re.IGNORECASE)
_CURRENCY_CHARS = "$€£"


def first_boxed(text: str) -> str | None:
    """Content of the first \\boxed{...}, with balanced inner braces."""
    start = text.find("\\boxed{")
    if start < 0:
        return None
    i = start + len("\\boxed{")
    depth = 0
    for j in range(i, len(text)):
        c = text[j]
        if c == "{":
            depth += 1
        elif c == "}":
            if depth == 0:
                return text[i:j]
            depth -= 1
    return None


def extract_marked_answer(text: str) -> str | None:
    """Raw content after the last 'final answer:' / 'answer:' marker."""
    matches = _MARKER_RE.findall(text or "")
    if not matches:
        return None
    return matches[-1].strip()


def _strip_latex(s: str) -> str:
    s = re.sub(r"\\(?:d|t)?frac", r"\\frac", s)
    # \frac{a}{b} -> (a)/(b), innermost first
    pat = re.compile(r"\\frac\{([^{}]*)\}\{([^{}]*)\}")
    while True:
        s, n = pat.subn(r"(\1)/(\2)", s)
        if n == 0:
            break
    s = re.sub(r"\\sqrt\{([^{}]*)\}", r"sqrt(\1)", s)
    s = re.sub(r"\\text\{[^{}]*\}", "", s)
    s = s.replace("\\left", "").replace("\\right", "")
    s = s.replace("\\cdot", "*").replace("\\times", "*").replace("\\div", "/")
    s = s.replace("\\pi", "pi")
    s = re.sub(r"\\[,!;:  ]", " ", s)
    s = s.replace("\\ ", " ")
    return s


def _format_decimal(v: Fraction) -> str:
    if v.denominator == 1:
        return str(v.numerator)
    return format(float(v), ".10g")


def canonicalize(raw: str) -> CanonicalAnswer | None:
    """Normalize one already-extracted answer string. None when empty."""
    s = (raw or "").strip()
    if not s:
        return None
    notes: list[str] = []
    if len(s) >= 2 and s.startswith("$") and s.endswith("$"):
        s = s[1:-1].strip()
    boxed = first_boxed(s)
    if boxed is not None:
        s = boxed
    s = _strip_latex(s)
    for ch in _CURRENCY_CHARS:
        if ch in s:
            s = s.replace(ch, "")
    s = re.sub(r"(?<=\d),(?=\d)", "", s)
    s = s.strip().rstrip(".").strip()
    if s.endswith("%"):
        s = s[:-1].strip()
        notes.append("stripped percent sign")
    if not s:
        return None

    if _INT_RE.match(s):
        v = Fraction(int(s))
        return CanonicalAnswer(text=str(v.numerator), value=v)
    if _DECIMAL_RE.match(s):
        v = Fraction(s)
        return CanonicalAnswer(text=_format_decimal(v), value=v)
    if _SCI_RE.match(s):
        v = Fraction(s)
        return CanonicalAnswer(text=_format_decimal(v), value=v)
    m = _FRACTION_RE.match(s)
    if m and int(m.group(3)) != 0:
        v = Fraction(int(m.group(2)), int(m.group(3)))
        if m.group(1) == "-":
            v = -v
        if v.denominator == 1:
            return CanonicalAnswer(text=str(v.numerator), value=v)
        return CanonicalAnswer(text=f"{v.numerator}/{v.denominator}", value=v)

    # symbolic: compact and make implicit multiplication explicit
    sym = re.sub(r"\s+", "", s)
    sym = re.sub(r"(?<=\d)(?=[A-Za-z(])", "*", sym)
    return CanonicalAnswer(text=sym, value=None)


def extract_answer(text: str, kind: DatasetKind = DatasetKind.GSM8K) -> CanonicalAnswer | None:
    """Pull the answer out of a model response.

    A whitespace-free string that canonicalization leaves unchanged is
    already an extracted answer and passes through as-is (extraction is
    idempotent on canonical values). Otherwise boxed-expression datasets
    take the first boxed expression, falling back to a final-answer
    marker, and plain datasets take the last numeric literal after
    stripping currency symbols and thousands commas.
    """
    if not text:
        return None
    stripped = text.strip()
    if stripped and not re.search(r"\s", stripped):
        canonical = canonicalize(stripped)
        if canonical is not None and canonical.text == stripped:
            return canonical
    if kind is DatasetKind.MATH500:
        boxed = first_boxed(text)
        if boxed is not None:
            return canonicalize(boxed)
        marked = extract_marked_answer(text)
        if marked is not None:
            return canonicalize(marked)
        return None
    cleaned = text
    for ch in _CURRENCY_CHARS:
        cleaned = cleaned.replace(ch, "")
    cleaned = re.sub(r"(?<=\d),(?=\d)", "", cleaned)
    nums = _NUM_RE.findall(cleaned)
    if not nums:
        return None
    return canonicalize(nums[-1])


def grade(extracted: CanonicalAnswer | None, gold: CanonicalAnswer) -> GradeResult:
    """Compare an extracted answer with the gold answer.

    Numeric pairs compare exactly as rationals, then with relative
    tolerance 1e-6; anything else compares by canonical string.
    """
    if extracted is None:
        return GradeResult(correct=False, extracted=None, normalization_notes=("no answer extracted",))
    notes: tuple[str, ...] = ()
    if extracted.value is not None and gold.value is not None:
        if extracted.value == gold.value:
            return GradeResult(correct=True, extracted=extracted.text)
        fa, fb = float(extracted.value), float(gold.value)
        denom = max(abs(fa), abs(fb))
        correct = denom > 0 and abs(fa - fb) / denom <= 1e-6
        if correct:
            notes = ("matched within relative tolerance",)
        return GradeResult(correct=correct, extracted=extracted.text, normalization_notes=notes)
    if extracted.value is None and gold.value is None:
        return GradeResult(correct=extracted.text == gold.text, extracted=extracted.text)
    return GradeResult(
        correct=False,
        extracted=extracted.text,
        normalization_notes=("numeric/symbolic mismatch",),
    )
