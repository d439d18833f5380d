"""Benchmark harness: datasets, grading, sweeps, persistence, reports.

Datasets are JSON Lines with one object per item (fields: question,
answer, optional id). Run records are JSON Lines too, one schema-versioned
RunRecord per line, appended through a single serialized writer so the
file stays well-formed under concurrency. Sweeps are resumable: cells
already present in the output are skipped.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .answers import (
    CanonicalAnswer,
    DatasetKind,
    GradeResult,
    canonicalize,
    extract_answer,
    first_boxed,
    grade,
)
from .engine import RunRecord, solve
from .estimator import EstimatorBackend
from .llmclient import LLMClient
from .policy import SolvePolicy
from .profile import DEFAULT_WEIGHTS, ScoreWeights, SolverClass

__all__ = [
    "BenchItem",
    "DatasetError",
    "DatasetKind",
    "GradeResult",
    "QuartileBucket",
    "QuartileReport",
    "CellSummary",
    "RunSummary",
    "extract_answer",
    "grade",
    "load_dataset",
    "load_records",
    "quartile_report",
    "run_experiment",
    "summarize",
]

log = logging.getLogger(__name__)

REPORT_COLUMNS = (
    "policy",
    "estimator",
    "dataset",
    "n",
    "accuracy",
    "mean_total_tokens",
    "mean_completion_tokens",
)


class DatasetError(ValueError):
    """A dataset file fails to parse or lacks a gold answer."""


@dataclass(frozen=True)
class BenchItem:
    id: str
    question: str
    gold_answer: CanonicalAnswer
    dataset: DatasetKind


def _gold_from_answer(answer: str, kind: DatasetKind) -> CanonicalAnswer | None:
    if kind is DatasetKind.GSM8K and "####" in answer:
        answer = answer.rsplit("####", 1)[1]
    elif kind is DatasetKind.MATH500:
        boxed = first_boxed(answer)
        if boxed is not None:
            answer = boxed
    return canonicalize(answer)


def load_dataset(path: str | Path, kind: DatasetKind, *, limit: int | None = None) -> list[BenchItem]:
    """Read a JSONL dataset, normalizing gold answers per dataset kind."""
    path = Path(path)
    items: list[BenchItem] = []
    with path.open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            question = obj.get("question")
            answer = obj.get("answer")
            if not question or not isinstance(question, str):
                raise DatasetError(f"{path}:{lineno}: missing question")
            if answer is None or not str(answer).strip():
                raise DatasetError(f"{path}:{lineno}: missing gold answer")
            gold = _gold_from_answer(str(answer), kind)
            if gold is None:
                raise DatasetError(f"{path}:{lineno}: gold answer did not normalize: {answer!r}")
            item_id = str(obj.get("id") or f"{kind.value}-{lineno:05d}")
            items.append(BenchItem(id=item_id, question=question, gold_answer=gold, dataset=kind))
            if limit is not None and len(items) >= limit:
                break
    if not items:
        log.warning("dataset %s produced zero items", path)
    return items


# --- persistence -----------------------------------------------------------


def load_records(path: str | Path) -> tuple[list[RunRecord], int]:
    """Read persisted records; malformed lines are skipped and counted."""
    path = Path(path)
    records: list[RunRecord] = []
    malformed = 0
    if not path.exists():
        return records, malformed
    with path.open(encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            try:
                records.append(RunRecord.from_json(line))
            except (ValueError, KeyError, TypeError):
                malformed += 1
    if malformed:
        log.warning("skipped %d malformed record line(s) in %s", malformed, path)
    return records, malformed


def _cell_key(record: RunRecord) -> tuple[str, str, str]:
    return (record.problem_id, record.policy_label, record.estimator_label)


# --- summaries -------------------------------------------------------------


@dataclass(frozen=True)
class CellSummary:
    policy: str
    estimator: str
    dataset: str
    n: int
    n_correct: int
    mean_total_tokens: float
    mean_completion_tokens: float

    @property
    def accuracy(self) -> float:
        return self.n_correct / self.n if self.n else 0.0

    def csv_row(self) -> list[str]:
        return [
            self.policy,
            self.estimator,
            self.dataset,
            str(self.n),
            f"{self.accuracy:.4f}",
            f"{self.mean_total_tokens:.2f}",
            f"{self.mean_completion_tokens:.2f}",
        ]


def summarize(records: Sequence[RunRecord]) -> list[CellSummary]:
    groups: dict[tuple[str, str, str], list[RunRecord]] = {}
    for rec in records:
        groups.setdefault((rec.policy_label, rec.estimator_label, rec.dataset), []).append(rec)
    cells = []
    for (pol, est, ds), recs in sorted(groups.items()):
        n = len(recs)
        n_correct = sum(1 for r in recs if r.grade and r.grade.get("correct"))
        totals = [r.usage.total_tokens for r in recs]
        completions = [r.usage.completion_tokens for r in recs]
        cells.append(
            CellSummary(
                policy=pol,
                estimator=est,
                dataset=ds,
                n=n,
                n_correct=n_correct,
                mean_total_tokens=sum(totals) / n if n else 0.0,
                mean_completion_tokens=sum(completions) / n if n else 0.0,
            )
        )
    return cells


@dataclass
class RunSummary:
    cells: list[CellSummary]
    n_records: int
    n_failed: int
    malformed_lines: int = 0

    def table(self) -> str:
        header = f"{'policy':<18} {'estimator':<22} {'dataset':<9} {'n':>5} {'acc':>7} {'tok/prob':>10} {'comp/prob':>10}"
        lines = [header, "-" * len(header)]
        for c in self.cells:
            lines.append(
                f"{c.policy:<18} {c.estimator:<22} {c.dataset:<9} {c.n:>5} "
                f"{c.accuracy:>7.4f} {c.mean_total_tokens:>10.1f} {c.mean_completion_tokens:>10.1f}"
            )
        if self.n_failed:
            lines.append(f"({self.n_failed} failed record(s) counted as incorrect)")
        return "\n".join(lines)

    def csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for c in self.cells:
            writer.writerow(c.csv_row())
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.csv_text(), encoding="utf-8")


# --- experiment sweep ------------------------------------------------------


def run_experiment(
    items: Sequence[BenchItem],
    policies: Sequence[SolvePolicy],
    estimators: Sequence[EstimatorBackend],
    solver: LLMClient,
    out_path: str | Path,
    *,
    seed: int | None = None,
    workers: int = 1,
    resume: bool = True,
    max_tokens: int = 1024,
    weights: ScoreWeights = DEFAULT_WEIGHTS,
    solver_class: SolverClass = SolverClass.B7,
    max_depth: int = 1,
    stop_after: int | None = None,
) -> RunSummary:
    """Solve every (item x policy x estimator) cell and stream records out.

    Per-cell failures are recorded, never abort the sweep. With ``resume``
    (the default), cells already present in the output file are skipped.
    ``stop_after`` ends the sweep early after that many new records, which
    models an interruption in tests.
    """
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    existing, malformed = load_records(out_path) if resume else ([], 0)
    done = {_cell_key(r) for r in existing}

    cells = [
        (item, pol, est)
        for item in items
        for pol in policies
        for est in estimators
        if (item.id, pol.label, est.label) not in done
    ]
    if stop_after is not None:
        cells = cells[:stop_after]

    write_lock = threading.Lock()
    new_records: list[RunRecord] = []

    with out_path.open("a", encoding="utf-8") as f:

        def run_cell(cell: tuple[BenchItem, SolvePolicy, EstimatorBackend]) -> RunRecord:
            item, pol, est = cell
            try:
                record = solve(
                    item.question,
                    pol,
                    est,
                    solver,
                    problem_id=item.id,
                    dataset_kind=item.dataset,
                    seed=seed,
                    max_tokens=max_tokens,
                    weights=weights,
                    solver_class=solver_class,
                    max_depth=max_depth,
                )
            except Exception as exc:  # a cell must never abort the sweep
                log.warning("cell (%s, %s, %s) failed: %s", item.id, pol.label, est.label, exc)
                record = RunRecord(
                    problem_id=item.id,
                    question=item.question,
                    dataset=item.dataset.value,
                    policy_kind=pol.kind.value,
                    policy_label=pol.label,
                    estimator_label=est.label,
                    solver_class=solver_class.value,
                    seed=seed,
                    status="failed",
                    error=str(exc),
                )
            final = canonicalize(record.final_answer) if record.final_answer else None
            result = grade(final, item.gold_answer)
            record.grade = {
                "correct": result.correct,
                "extracted": result.extracted,
                "gold": item.gold_answer.text,
                "notes": list(result.normalization_notes),
            }
            with write_lock:
                f.write(record.to_json() + "\n")
                f.flush()
                new_records.append(record)
            return record

        if workers <= 1:
            for cell in cells:
                run_cell(cell)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(run_cell, cells))

    all_records = existing + new_records
    return RunSummary(
        cells=summarize(all_records),
        n_records=len(all_records),
        n_failed=sum(1 for r in all_records if r.status != "ok"),
        malformed_lines=malformed,
    )


# --- quartile analysis -----------------------------------------------------


@dataclass(frozen=True)
class QuartileBucket:
    label: str
    rho_min: float
    rho_max: float
    count: int
    n_correct: int
    mean_total_tokens: float

    @property
    def accuracy(self) -> float:
        return self.n_correct / self.count if self.count else 0.0


@dataclass
class QuartileReport:
    buckets: list[QuartileBucket]
    boundaries: tuple[float, ...]
    notes: list[str] = field(default_factory=list)

    def table(self) -> str:
        lines = [f"{'quartile':<10} {'rho range':<16} {'n':>5} {'acc':>7} {'tok/prob':>10}"]
        for b in self.buckets:
            rng = f"[{b.rho_min:.2f}, {b.rho_max:.2f}]"
            lines.append(
                f"{b.label:<10} {rng:<16} {b.count:>5} {b.accuracy:>7.4f} {b.mean_total_tokens:>10.1f}"
            )
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines)


def quartile_report(
    records: Sequence[RunRecord],
    *,
    boundaries: tuple[float, float, float] | None = None,
    rho_by_problem: dict[str, float] | None = None,
) -> QuartileReport:
    """Per-complexity-quartile accuracy and token usage.

    Records that carry no rho of their own (baseline policies skip
    estimation) take the rho recorded for the same problem elsewhere,
    either from ``rho_by_problem`` or from rho-bearing records in the same
    batch, so fixed policies can be bucketed by problem complexity.
    Split points default to the empirical 25/50/75 percentiles; pass
    ``boundaries`` to pin them.
    """
    rho_map = dict(rho_by_problem or {})
    for rec in records:
        if rec.rho is not None and rec.problem_id not in rho_map:
            rho_map[rec.problem_id] = rec.rho

    notes: list[str] = []
    usable: list[tuple[float, RunRecord]] = []
    dropped = 0
    for rec in records:
        rho = rec.rho if rec.rho is not None else rho_map.get(rec.problem_id)
        if rho is None:
            dropped += 1
            continue
        usable.append((rho, rec))
    if dropped:
        notes.append(f"{dropped} record(s) had no resolvable rho and were excluded")

    def bucket(label: str, members: list[tuple[float, RunRecord]]) -> QuartileBucket:
        rhos = [r for r, _ in members]
        recs = [rec for _, rec in members]
        return QuartileBucket(
            label=label,
            rho_min=min(rhos) if rhos else 0.0,
            rho_max=max(rhos) if rhos else 0.0,
            count=len(recs),
            n_correct=sum(1 for r in recs if r.grade and r.grade.get("correct")),
            mean_total_tokens=(
                sum(r.usage.total_tokens for r in recs) / len(recs) if recs else 0.0
            ),
        )

    if len(usable) < 4:
        notes.append("fewer than 4 records: single bucket")
        return QuartileReport(buckets=[bucket("all", usable)], boundaries=(), notes=notes)

    if boundaries is None:
        rhos = np.array([r for r, _ in usable], dtype=float)
        b1, b2, b3 = (float(x) for x in np.percentile(rhos, [25.0, 50.0, 75.0]))
    else:
        b1, b2, b3 = boundaries

    q1 = [(r, rec) for r, rec in usable if r <= b1]
    q2 = [(r, rec) for r, rec in usable if b1 < r <= b2]
    q3 = [(r, rec) for r, rec in usable if b2 < r <= b3]
    q4 = [(r, rec) for r, rec in usable if r > b3]
    return QuartileReport(
        buckets=[bucket("Q1", q1), bucket("Q2", q2), bucket("Q3", q3), bucket("Q4", q4)],
        boundaries=(b1, b2, b3),
        notes=notes,
    )
