"""Two-stage adaptive solving engine.

Control flow for the adaptive policy: profile the question, compute rho,
and gate. Below the gate threshold the question is answered with a single
direct call. Above it, the question is decomposed into K = estimated_steps
ordered steps with a dependency graph; each step is profiled, given a
thought budget from its own rho, fanned out into that many candidate
generations against the accumulated context, and resolved by
self-consistency majority vote; a final aggregation call produces the
answer. Baseline policies (zero-shot, cot, fixed-tier) run through the
same machinery with the adaptive parts pinned.

Every endpoint call is recorded with its purpose and token usage, so a
RunRecord's usage totals are the exact sum of its constituent calls.
"""

from __future__ import annotations

import json
import logging
import re
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .answers import (
    CanonicalAnswer,
    DatasetKind,
    canonicalize,
    extract_answer,
    extract_marked_answer,
)
from .estimator import EstimateParseError, EstimatorBackend, estimate
from .llmclient import (
    ChatRequest,
    LLMClient,
    LLMClientError,
    TokenUsage,
    ZERO_USAGE,
)
from .policy import PolicyKind, SolvePolicy, should_decompose, thought_budget, tier_of
from .profile import (
    ComplexityProfile,
    ScoreWeights,
    DEFAULT_WEIGHTS,
    SolverClass,
    apply_mask,
    score,
)
from .templates import load_template, render

log = logging.getLogger(__name__)

RECORD_SCHEMA_VERSION = "run-v1"
DEFAULT_MAX_TOKENS = 1024
FANOUT_TEMPERATURE = 0.7

_DEP_ANNOTATION_RE = re.compile(r"\b(?:using|uses|depends\s+on|from)\s+step\s+(\d+)", re.IGNORECASE)
_STEP_LINE_RE = re.compile(r"^\s*(?:step\s*)?(\d+)\s*[:.)\-]\s*(.+?)\s*$", re.IGNORECASE | re.MULTILINE)


class DecompositionParseError(RuntimeError):
    """No usable step list even after the repair prompt."""


class AllCandidatesFailedError(RuntimeError):
    """Every candidate generation for a step failed."""


# --- domain types ----------------------------------------------------------


@dataclass(frozen=True)
class Step:
    index: int
    text: str
    depends_on: tuple[int, ...] = ()

    def __post_init__(self):
        if self.index < 1:
            raise ValueError("step indices are 1-based")
        bad = [j for j in self.depends_on if not 1 <= j < self.index]
        if bad:
            raise ValueError(f"step {self.index} depends on invalid step(s) {bad}")


@dataclass(frozen=True)
class StepPlan:
    steps: tuple[Step, ...]

    def __post_init__(self):
        if len(self.steps) < 1:
            raise ValueError("a plan needs at least one step")
        for pos, step in enumerate(self.steps, start=1):
            if step.index != pos:
                raise ValueError("step indices must be contiguous from 1")

    @property
    def K(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class DependencyGraph:
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        for f, t in self.edges:
            if not f < t:
                raise ValueError(f"dependency edges must point forward, got ({f}, {t})")

    def summary(self, k: int) -> str:
        if k <= 1:
            return "Single step; no dependencies."
        uses: dict[int, list[int]] = {}
        for f, t in sorted(self.edges):
            uses.setdefault(t, []).append(f)
        parts = [
            f"step {t} uses step {', '.join(str(f) for f in sorted(fs))}"
            for t, fs in sorted(uses.items())
        ]
        return f"{k} steps in order. " + "; ".join(parts) + "."


@dataclass(frozen=True)
class ThoughtCandidate:
    step_index: int
    candidate_index: int
    text: str
    extracted_answer: str | None
    usage: TokenUsage


@dataclass(frozen=True)
class StepSolution:
    step_index: int
    chosen: ThoughtCandidate
    vote_tally: dict[str, int]


@dataclass(frozen=True)
class Context:
    problem: str
    graph_summary: str
    history: tuple[tuple[str, str], ...] = ()

    def history_text(self) -> str:
        if not self.history:
            return "(no steps solved yet)"
        lines = []
        for j, (step_text, solution_text) in enumerate(self.history, start=1):
            lines.append(f"Step {j}: {step_text}\nSolution {j}: {solution_text}")
        return "\n".join(lines)


@dataclass
class CallRecord:
    purpose: str
    prompt_tokens: int
    completion_tokens: int
    approximate: bool = False

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    def to_dict(self) -> dict:
        return {
            "purpose": self.purpose,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "approximate": self.approximate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CallRecord":
        return cls(
            purpose=d["purpose"],
            prompt_tokens=int(d["prompt_tokens"]),
            completion_tokens=int(d["completion_tokens"]),
            approximate=bool(d.get("approximate", False)),
        )


@dataclass
class StepTrace:
    index: int
    text: str
    rho: float | None
    tier: str | None
    budget: int
    chosen_index: int
    chosen_answer: str | None
    vote_tally: dict[str, int]
    candidates: list[dict]

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "text": self.text,
            "rho": self.rho,
            "tier": self.tier,
            "budget": self.budget,
            "chosen_index": self.chosen_index,
            "chosen_answer": self.chosen_answer,
            "vote_tally": self.vote_tally,
            "candidates": self.candidates,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StepTrace":
        return cls(
            index=int(d["index"]),
            text=d["text"],
            rho=d["rho"],
            tier=d["tier"],
            budget=int(d["budget"]),
            chosen_index=int(d["chosen_index"]),
            chosen_answer=d["chosen_answer"],
            vote_tally={str(k): int(v) for k, v in d["vote_tally"].items()},
            candidates=list(d["candidates"]),
        )


@dataclass
class RunRecord:
    """Full per-problem trace: everything the reports aggregate over."""

    problem_id: str
    question: str
    dataset: str
    policy_kind: str
    policy_label: str
    estimator_label: str
    solver_class: str
    seed: int | None = None
    profile: dict | None = None
    feature_mask: list[str] = field(default_factory=list)
    rho: float | None = None
    tier: str | None = None
    gate_decision: str | None = None
    plan: list[dict] | None = None
    graph_edges: list[list[int]] | None = None
    steps: list[StepTrace] = field(default_factory=list)
    final_answer: str | None = None
    final_answer_source: str | None = None
    flags: list[str] = field(default_factory=list)
    calls: list[CallRecord] = field(default_factory=list)
    wall_time_s: float = 0.0
    status: str = "ok"
    error: str | None = None
    grade: dict | None = None

    @property
    def usage(self) -> TokenUsage:
        total = ZERO_USAGE
        for c in self.calls:
            total = total + TokenUsage(c.prompt_tokens, c.completion_tokens)
        return total

    def call_purposes(self) -> list[str]:
        return [c.purpose for c in self.calls]

    def to_dict(self) -> dict:
        usage = self.usage
        return {
            "schema": RECORD_SCHEMA_VERSION,
            "problem_id": self.problem_id,
            "question": self.question,
            "dataset": self.dataset,
            "policy_kind": self.policy_kind,
            "policy_label": self.policy_label,
            "estimator_label": self.estimator_label,
            "solver_class": self.solver_class,
            "seed": self.seed,
            "profile": self.profile,
            "feature_mask": self.feature_mask,
            "rho": self.rho,
            "tier": self.tier,
            "gate_decision": self.gate_decision,
            "plan": self.plan,
            "graph_edges": self.graph_edges,
            "steps": [s.to_dict() for s in self.steps],
            "final_answer": self.final_answer,
            "final_answer_source": self.final_answer_source,
            "flags": self.flags,
            "calls": [c.to_dict() for c in self.calls],
            "usage": {
                "prompt_tokens": usage.prompt_tokens,
                "completion_tokens": usage.completion_tokens,
                "total_tokens": usage.total_tokens,
            },
            "wall_time_s": self.wall_time_s,
            "status": self.status,
            "error": self.error,
            "grade": self.grade,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        rec = cls(
            problem_id=d["problem_id"],
            question=d["question"],
            dataset=d["dataset"],
            policy_kind=d["policy_kind"],
            policy_label=d["policy_label"],
            estimator_label=d["estimator_label"],
            solver_class=d["solver_class"],
            seed=d.get("seed"),
            profile=d.get("profile"),
            feature_mask=list(d.get("feature_mask") or []),
            rho=d.get("rho"),
            tier=d.get("tier"),
            gate_decision=d.get("gate_decision"),
            plan=d.get("plan"),
            graph_edges=d.get("graph_edges"),
            steps=[StepTrace.from_dict(s) for s in d.get("steps") or []],
            final_answer=d.get("final_answer"),
            final_answer_source=d.get("final_answer_source"),
            flags=list(d.get("flags") or []),
            calls=[CallRecord.from_dict(c) for c in d.get("calls") or []],
            wall_time_s=float(d.get("wall_time_s") or 0.0),
            status=d.get("status", "ok"),
            error=d.get("error"),
            grade=d.get("grade"),
        )
        return rec

    @classmethod
    def from_json(cls, line: str) -> "RunRecord":
        return cls.from_dict(json.loads(line))


class _Recorder:
    """Collects per-call usage so record totals stay conserved."""

    def __init__(self):
        self.calls: list[CallRecord] = []

    def add(self, purpose: str, usage: TokenUsage, approximate: bool = False) -> None:
        self.calls.append(
            CallRecord(
                purpose=purpose,
                prompt_tokens=usage.prompt_tokens,
                completion_tokens=usage.completion_tokens,
                approximate=approximate,
            )
        )


# --- operations ------------------------------------------------------------


def _parse_step_lines(text: str) -> list[str]:
    return [m.group(2).strip() for m in _STEP_LINE_RE.finditer(text or "")]


def _steps_from_texts(texts: Sequence[str]) -> StepPlan:
    steps = []
    for i, step_text in enumerate(texts, start=1):
        refs = sorted({int(n) for n in _DEP_ANNOTATION_RE.findall(step_text)})
        valid = tuple(j for j in refs if 1 <= j < i)
        dropped = [j for j in refs if not 1 <= j < i]
        if dropped:
            log.warning("step %d references unavailable step(s) %s; ignored", i, dropped)
        steps.append(Step(index=i, text=step_text, depends_on=valid))
    return StepPlan(steps=tuple(steps))


def _profile_summary(profile: ComplexityProfile | None) -> str:
    if profile is None:
        return "n/a"
    return (
        f"{profile.estimated_steps} predicted step(s), "
        f"{profile.operations} operation kind(s), difficulty {profile.difficulty:g}/10"
    )


def decompose(
    question: str,
    K: int,
    profile: ComplexityProfile | None,
    solver: LLMClient,
    *,
    seed: int | None = None,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    recorder: _Recorder | None = None,
) -> tuple[StepPlan, tuple[str, ...]]:
    """Split the question into exactly K ordered steps.

    A reply with the wrong step count triggers one repair prompt; after
    that, extra steps are merged into the last slot and missing steps are
    padded, with the adjustment flagged. Returns (plan, flags).
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    recorder = recorder or _Recorder()
    prompt = render(
        load_template("decompose"),
        question=question,
        k=K,
        profile=_profile_summary(profile),
    )
    response = solver.complete(
        ChatRequest.user(prompt, temperature=0.0, max_tokens=max_tokens, seed=seed)
    )
    recorder.add("decompose", response.usage, response.usage_is_approximate)
    texts = _parse_step_lines(response.text)
    flags: list[str] = []

    if len(texts) != K:
        repair_prompt = render(
            load_template("decompose_repair"), question=question, k=K, n=len(texts)
        )
        repair = solver.complete(
            ChatRequest.user(repair_prompt, temperature=0.0, max_tokens=max_tokens, seed=seed)
        )
        recorder.add("decompose", repair.usage, repair.usage_is_approximate)
        flags.append("decomposition-repaired")
        repaired = _parse_step_lines(repair.text)
        if repaired:
            texts = repaired

    if not texts:
        raise DecompositionParseError("no numbered steps found after repair")
    if len(texts) > K:
        merged = "; then ".join(texts[K - 1 :])
        texts = list(texts[: K - 1]) + [merged]
        flags.append("decomposition-merged")
    elif len(texts) < K:
        while len(texts) < K:
            texts.append("Combine the previous results toward the final answer.")
        flags.append("decomposition-padded")

    return _steps_from_texts(texts), tuple(flags)


def build_dependency_graph(plan: StepPlan) -> DependencyGraph:
    """Linear chain by default, plus any explicit step annotations."""
    edges: set[tuple[int, int]] = set()
    for step in plan.steps:
        if step.index > 1:
            edges.add((step.index - 1, step.index))
        for j in step.depends_on:
            edges.add((j, step.index))
    return DependencyGraph(edges=frozenset(edges))


def build_context(
    question: str,
    graph: DependencyGraph,
    history: Sequence[tuple[str, str]],
    i: int,
    *,
    k: int | None = None,
) -> Context:
    """Context for step i: the problem, graph summary, and steps 1..i-1."""
    if len(history) != i - 1:
        raise ValueError(f"history must cover steps 1..{i - 1}, got {len(history)} entries")
    return Context(
        problem=question,
        graph_summary=graph.summary(k if k is not None else max(i, len(history) + 1)),
        history=tuple(history),
    )


def generate_thoughts(
    step: Step,
    context: Context,
    B: int,
    solver: LLMClient,
    *,
    dataset_kind: DatasetKind = DatasetKind.GSM8K,
    seed: int | None = None,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    temperature: float = FANOUT_TEMPERATURE,
    recorder: _Recorder | None = None,
) -> list[ThoughtCandidate]:
    """Exactly B candidates for one step.

    Individual call failures (after the client's own retries) yield an
    empty candidate that carries no vote; only a fully failed fan-out
    raises. Multi-candidate fan-out samples at ``temperature``; a single
    candidate runs greedy.
    """
    if B < 1:
        raise ValueError("B must be >= 1")
    recorder = recorder or _Recorder()
    prompt = render(
        load_template("thought"),
        question=context.problem,
        graph=context.graph_summary,
        history=context.history_text(),
        step=step.text,
    )
    temp = temperature if B > 1 else 0.0
    candidates: list[ThoughtCandidate] = []
    failures = 0
    for j in range(1, B + 1):
        request_seed = None if seed is None else seed + step.index * 1000 + j
        try:
            response = solver.complete(
                ChatRequest.user(prompt, temperature=temp, max_tokens=max_tokens, seed=request_seed)
            )
        except LLMClientError as exc:
            log.warning("candidate %d/%d for step %d failed: %s", j, B, step.index, exc)
            failures += 1
            candidates.append(
                ThoughtCandidate(
                    step_index=step.index,
                    candidate_index=j,
                    text="",
                    extracted_answer=None,
                    usage=ZERO_USAGE,
                )
            )
            continue
        recorder.add("thought", response.usage, response.usage_is_approximate)
        extracted = extract_answer(response.text, dataset_kind)
        candidates.append(
            ThoughtCandidate(
                step_index=step.index,
                candidate_index=j,
                text=response.text,
                extracted_answer=extracted.text if extracted else None,
                usage=response.usage,
            )
        )
    if failures == B:
        raise AllCandidatesFailedError(f"all {B} candidates failed for step {step.index}")
    return candidates


def select_best(candidates: Sequence[ThoughtCandidate]) -> StepSolution:
    """Majority vote over extracted answers.

    Candidates without an extractable answer get zero votes. Ties go to
    the lowest candidate index among the tied answers; if nothing is
    extractable the first candidate wins.
    """
    if not candidates:
        raise ValueError("need at least one candidate")
    tally = Counter(c.extracted_answer for c in candidates if c.extracted_answer is not None)
    if not tally:
        return StepSolution(
            step_index=candidates[0].step_index, chosen=candidates[0], vote_tally={}
        )
    best_count = max(tally.values())
    chosen = next(
        c
        for c in candidates
        if c.extracted_answer is not None and tally[c.extracted_answer] == best_count
    )
    return StepSolution(step_index=chosen.step_index, chosen=chosen, vote_tally=dict(tally))


def aggregate(
    context: Context,
    solver: LLMClient,
    *,
    last_step_answer: str | None = None,
    seed: int | None = None,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    recorder: _Recorder | None = None,
) -> tuple[str | None, bool]:
    """One final synthesis call over the completed context.

    Returns (answer, used_fallback): the marker content of the reply, or
    the last step's chosen answer when no marker is found (flagged).
    """
    recorder = recorder or _Recorder()
    prompt = render(
        load_template("aggregate"),
        question=context.problem,
        graph=context.graph_summary,
        history=context.history_text(),
    )
    response = solver.complete(
        ChatRequest.user(prompt, temperature=0.0, max_tokens=max_tokens, seed=seed)
    )
    recorder.add("aggregate", response.usage, response.usage_is_approximate)
    marked = extract_marked_answer(response.text)
    if marked is not None:
        canonical = canonicalize(marked)
        if canonical is not None:
            return canonical.text, False
    return last_step_answer, True


# --- solve -----------------------------------------------------------------


def _extract_final(text: str, dataset_kind: DatasetKind) -> str | None:
    marked = extract_marked_answer(text)
    if marked is not None:
        canonical = canonicalize(marked)
        if canonical is not None:
            return canonical.text
    extracted = extract_answer(text, dataset_kind)
    return extracted.text if extracted else None


def solve(
    question: str,
    policy: SolvePolicy,
    estimator_backend: EstimatorBackend,
    solver: LLMClient,
    *,
    problem_id: str = "",
    dataset_kind: DatasetKind = DatasetKind.GSM8K,
    seed: int | None = None,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    weights: ScoreWeights = DEFAULT_WEIGHTS,
    solver_class: SolverClass = SolverClass.B7,
    max_depth: int = 1,
) -> RunRecord:
    """Run one problem under a policy and return the full trace record.

    Endpoint failures after retries mark the record failed and keep the
    partial trace. A decomposition that stays unparseable falls back to a
    direct solve and is flagged.
    """
    if not question or not question.strip():
        raise ValueError("question must be non-empty")
    started = time.perf_counter()
    recorder = _Recorder()
    record = RunRecord(
        problem_id=problem_id,
        question=question,
        dataset=dataset_kind.value,
        policy_kind=policy.kind.value,
        policy_label=policy.label,
        estimator_label=estimator_backend.label,
        solver_class=solver_class.value,
        seed=seed,
        feature_mask=sorted(estimator_backend.feature_mask or []),
        calls=recorder.calls,
    )
    params = policy.params

    def run_estimate(text: str):
        result = estimate(text, estimator_backend, seed=seed)
        recorder.add("estimate", result.token_usage)
        masked = apply_mask(result.profile, estimator_backend.feature_mask)
        scored = score(
            masked, weights, solver_class, tau_low=params.tau_low, tau_high=params.tau_high
        )
        return result, masked, scored

    def direct_call(purpose: str) -> str | None:
        template = "cot" if purpose == "cot" else "zero_shot"
        prompt = render(load_template(template), question=question)
        response = solver.complete(
            ChatRequest.user(prompt, temperature=0.0, max_tokens=max_tokens, seed=seed)
        )
        recorder.add(purpose, response.usage, response.usage_is_approximate)
        return _extract_final(response.text, dataset_kind)

    def run_plan(plan: StepPlan, budget_for, depth: int) -> None:
        graph = build_dependency_graph(plan)
        record.plan = [
            {"index": s.index, "text": s.text, "depends_on": list(s.depends_on)}
            for s in plan.steps
        ]
        record.graph_edges = [list(e) for e in sorted(graph.edges)]
        history: list[tuple[str, str]] = []
        for step in plan.steps:
            step_rho = None
            step_tier = None
            if budget_for is None:
                _, _, step_score = run_estimate(step.text)
                step_rho = step_score.rho
                step_tier = step_score.tier.value
                budget = thought_budget(step_rho, params)
            else:
                budget = budget_for
            context = build_context(question, graph, history, step.index, k=plan.K)
            if (
                budget_for is None
                and depth < max_depth
                and step_rho is not None
                and should_decompose(step_rho, params)
            ):
                # optional recursion: a sufficiently complex step becomes its
                # own decomposition run; off unless max_depth > 1
                answer_text = _recurse_step(step, depth + 1)
                record.flags.append(f"recursed-step-{step.index}")
                solution_text = answer_text or ""
                trace = StepTrace(
                    index=step.index,
                    text=step.text,
                    rho=step_rho,
                    tier=step_tier,
                    budget=budget,
                    chosen_index=0,
                    chosen_answer=answer_text,
                    vote_tally={},
                    candidates=[],
                )
            else:
                candidates = generate_thoughts(
                    step,
                    context,
                    budget,
                    solver,
                    dataset_kind=dataset_kind,
                    seed=seed,
                    max_tokens=max_tokens,
                    recorder=recorder,
                )
                if any(not c.text for c in candidates):
                    record.flags.append(f"candidate-failed-step-{step.index}")
                solution = select_best(candidates)
                answer_text = solution.chosen.extracted_answer
                solution_text = solution.chosen.text
                trace = StepTrace(
                    index=step.index,
                    text=step.text,
                    rho=step_rho,
                    tier=step_tier,
                    budget=budget,
                    chosen_index=solution.chosen.candidate_index,
                    chosen_answer=answer_text,
                    vote_tally=solution.vote_tally,
                    candidates=[
                        {
                            "index": c.candidate_index,
                            "answer": c.extracted_answer,
                            "prompt_tokens": c.usage.prompt_tokens,
                            "completion_tokens": c.usage.completion_tokens,
                            "text": c.text,
                        }
                        for c in candidates
                    ],
                )
            record.steps.append(trace)
            history.append((step.text, solution_text))

        final_context = build_context(question, graph, history, plan.K + 1, k=plan.K)
        last_answer = record.steps[-1].chosen_answer
        answer, used_fallback = aggregate(
            final_context,
            solver,
            last_step_answer=last_answer,
            seed=seed,
            max_tokens=max_tokens,
            recorder=recorder,
        )
        if used_fallback:
            record.flags.append("aggregate-marker-missing")
            record.final_answer_source = "last-step-fallback"
        else:
            record.final_answer_source = "aggregate"
        record.final_answer = answer

    def _recurse_step(step: Step, depth: int) -> str | None:
        sub_result, sub_profile, _ = run_estimate(step.text)
        sub_k = sub_profile.estimated_steps
        sub_plan, sub_flags = decompose(
            step.text, sub_k, sub_profile, solver, seed=seed, max_tokens=max_tokens, recorder=recorder
        )
        record.flags.extend(f"sub{step.index}-{f}" for f in sub_flags)
        graph = build_dependency_graph(sub_plan)
        history: list[tuple[str, str]] = []
        last_answer: str | None = None
        for sub_step in sub_plan.steps:
            _, _, sub_score = run_estimate(sub_step.text)
            budget = thought_budget(sub_score.rho, params)
            context = build_context(step.text, graph, history, sub_step.index, k=sub_plan.K)
            candidates = generate_thoughts(
                sub_step,
                context,
                budget,
                solver,
                dataset_kind=dataset_kind,
                seed=seed,
                max_tokens=max_tokens,
                recorder=recorder,
            )
            solution = select_best(candidates)
            last_answer = solution.chosen.extracted_answer or last_answer
            history.append((sub_step.text, solution.chosen.text))
        final_context = build_context(step.text, graph, history, sub_plan.K + 1, k=sub_plan.K)
        answer, _ = aggregate(
            final_context,
            solver,
            last_step_answer=last_answer,
            seed=seed,
            max_tokens=max_tokens,
            recorder=recorder,
        )
        return answer

    try:
        if policy.kind is PolicyKind.ZERO_SHOT:
            record.final_answer = direct_call("zero-shot")
            record.final_answer_source = "direct"
        elif policy.kind is PolicyKind.COT:
            record.final_answer = direct_call("cot")
            record.final_answer_source = "direct"
        elif policy.kind is PolicyKind.FIXED_TIER:
            plan, flags = decompose(
                question,
                policy.fixed_K,
                None,
                solver,
                seed=seed,
                max_tokens=max_tokens,
                recorder=recorder,
            )
            record.flags.extend(flags)
            run_plan(plan, budget_for=policy.fixed_B, depth=max_depth)
        else:  # adaptive
            est_result, masked_profile, question_score = run_estimate(question)
            record.profile = est_result.profile.to_json_dict()
            record.rho = question_score.rho
            record.tier = question_score.tier.value
            if not should_decompose(question_score.rho, params):
                record.gate_decision = "direct"
                record.final_answer = direct_call("direct")
                record.final_answer_source = "direct"
            else:
                record.gate_decision = "decompose"
                try:
                    plan, flags = decompose(
                        question,
                        masked_profile.estimated_steps,
                        masked_profile,
                        solver,
                        seed=seed,
                        max_tokens=max_tokens,
                        recorder=recorder,
                    )
                except DecompositionParseError:
                    record.flags.append("decomposition-fallback-direct")
                    record.final_answer = direct_call("direct")
                    record.final_answer_source = "direct"
                else:
                    record.flags.extend(flags)
                    run_plan(plan, budget_for=None, depth=1)
        if record.final_answer is None:
            record.flags.append("final-answer-missing")
    except (LLMClientError, AllCandidatesFailedError, EstimateParseError) as exc:
        record.status = "failed"
        record.error = str(exc)
    record.wall_time_s = time.perf_counter() - started
    return record
