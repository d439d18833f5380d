"""Operator CLI: estimate, solve, bench, report.

Exit codes: 0 success, 1 usage/configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .answers import DatasetKind
from .bench import (
    DatasetError,
    load_dataset,
    load_records,
    quartile_report,
    run_experiment,
    summarize,
    RunSummary,
)
from .config import ConfigError, RunConfig, build_client, build_estimator, load_config
from .engine import solve as engine_solve
from .estimator import EstimateParseError, EstimatorBackend, EstimatorKind, estimate
from .llmclient import LLMClientError
from .policy import (
    PolicyKind,
    SolvePolicy,
    should_decompose,
    thought_budget,
    tier_of,
)
from .profile import score

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _question_from_args(args) -> str:
    if args.file:
        return Path(args.file).read_text(encoding="utf-8").strip()
    if args.question:
        return args.question
    raise ConfigError("provide a question argument or --file")


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "limit", None) is not None:
        cfg.limit = args.limit
    param_flags = {
        "tau_dec": args.tau_dec,
        "tau_low": args.tau_low,
        "tau_high": args.tau_high,
        "alpha": args.alpha,
        "B_max": args.b_max,
    }
    overrides = {k: v for k, v in param_flags.items() if v is not None}
    params = cfg.policy.params
    if overrides:
        try:
            params = dataclasses.replace(params, **overrides)
        except ValueError as exc:
            raise ConfigError(f"invalid policy parameters: {exc}") from exc
    if getattr(args, "policy", None) or overrides:
        kind = PolicyKind(args.policy) if getattr(args, "policy", None) else cfg.policy.kind
        cfg.policy = SolvePolicy(
            kind=kind,
            fixed_K=cfg.policy.fixed_K,
            fixed_B=cfg.policy.fixed_B,
            params=params,
        )
    if getattr(args, "estimator", None):
        cfg.estimator_kind = EstimatorKind(args.estimator)
    return cfg


def _print_decisions(rho: float, cfg: RunConfig) -> None:
    params = cfg.policy.params
    gate = "decompose" if should_decompose(rho, params) else "direct"
    print(f"rho: {rho:.4f}")
    print(f"tier: {tier_of(rho, params).value}")
    print(f"gate: {gate}")
    print(f"thought budget: {thought_budget(rho, params)}")


def cmd_estimate(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    if args.rho_override is not None:
        print("(rho override: no estimator call made)")
        _print_decisions(args.rho_override, cfg)
        return EXIT_OK
    question = _question_from_args(args)
    backend = build_estimator(cfg)
    try:
        result = estimate(question, backend, seed=cfg.seed)
    except EstimateParseError as exc:
        print(f"estimator failed: {exc}", file=sys.stderr)
        print(f"raw response:\n{exc.raw_response}", file=sys.stderr)
        return EXIT_RUNTIME
    except LLMClientError as exc:
        print(f"estimator endpoint failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print("profile:")
    for name, value in result.profile.as_dict().items():
        print(f"  {name}: {value:g}")
    scored = score(
        result.profile,
        solver_class=cfg.solver_class,
        tau_low=cfg.policy.params.tau_low,
        tau_high=cfg.policy.params.tau_high,
    )
    _print_decisions(scored.rho, cfg)
    if result.repair_attempts:
        print(f"(required {result.repair_attempts} repair prompt(s))")
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    question = _question_from_args(args)
    if not cfg.solver_endpoint:
        raise ConfigError("solve needs [solver].endpoint in the config")
    solver = build_client(cfg, cfg.solver_endpoint)
    backend = build_estimator(cfg)
    record = engine_solve(
        question,
        cfg.policy,
        backend,
        solver,
        problem_id=args.id or "cli",
        dataset_kind=cfg.dataset_kind,
        seed=cfg.seed,
        max_tokens=cfg.max_tokens,
        solver_class=cfg.solver_class,
        max_depth=cfg.max_depth,
    )
    records_path = Path(args.out) if args.out else cfg.resolve_path(cfg.records_path)
    records_path.parent.mkdir(parents=True, exist_ok=True)
    with records_path.open("a", encoding="utf-8") as f:
        f.write(record.to_json() + "\n")

    print(f"policy: {record.policy_label}  estimator: {record.estimator_label}")
    if record.rho is not None:
        print(f"rho: {record.rho:.4f}  tier: {record.tier}  gate: {record.gate_decision}")
    for step in record.steps:
        rho_part = f"rho={step.rho:.4f} " if step.rho is not None else ""
        print(
            f"step {step.index}: {rho_part}budget={step.budget} answer={step.chosen_answer}"
        )
    usage = record.usage
    print(f"final answer: {record.final_answer}")
    print(
        f"tokens: prompt={usage.prompt_tokens} completion={usage.completion_tokens} "
        f"total={usage.total_tokens}"
    )
    if record.flags:
        print(f"flags: {', '.join(record.flags)}")
    print(f"record appended to {records_path}")
    if record.status != "ok":
        print(f"run failed: {record.error}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _estimators_for(cfg: RunConfig, kinds: list[str]) -> list[EstimatorBackend]:
    backends = []
    for kind_name in kinds:
        sub = dataclasses.replace(cfg, estimator_kind=EstimatorKind(kind_name))
        backends.append(build_estimator(sub))
    return backends


def cmd_bench(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    if not cfg.dataset_path:
        raise ConfigError("bench needs [dataset].path in the config")
    if not cfg.solver_endpoint:
        raise ConfigError("bench needs [solver].endpoint in the config")
    items = load_dataset(cfg.resolve_path(cfg.dataset_path), cfg.dataset_kind, limit=cfg.limit)
    solver = build_client(cfg, cfg.solver_endpoint)

    if args.policies:
        policy_kinds = [p.strip() for p in args.policies.split(",") if p.strip()]
        policies = [
            SolvePolicy(
                kind=PolicyKind(p),
                fixed_K=cfg.policy.fixed_K,
                fixed_B=cfg.policy.fixed_B,
                params=cfg.policy.params,
            )
            for p in policy_kinds
        ]
    else:
        policies = [cfg.policy]
    if args.estimators:
        estimators = _estimators_for(cfg, [e.strip() for e in args.estimators.split(",")])
    else:
        estimators = [build_estimator(cfg)]

    out_path = Path(args.out) if args.out else cfg.resolve_path(cfg.records_path)
    summary = run_experiment(
        items,
        policies,
        estimators,
        solver,
        out_path,
        seed=cfg.seed,
        workers=cfg.workers,
        max_tokens=cfg.max_tokens,
        solver_class=cfg.solver_class,
        max_depth=cfg.max_depth,
    )
    print(summary.table())
    print(f"records: {out_path}")
    return EXIT_OK


def cmd_report(args) -> int:
    records, malformed = load_records(args.records)
    if malformed:
        print(f"warning: skipped {malformed} malformed record line(s)", file=sys.stderr)
    if args.policy:
        records = [r for r in records if r.policy_kind == args.policy]
    if args.estimator:
        records = [r for r in records if r.estimator_label.startswith(args.estimator)]
    if not records:
        print("warning: no records found; empty report", file=sys.stderr)
        return EXIT_OK
    summary = RunSummary(
        cells=summarize(records),
        n_records=len(records),
        n_failed=sum(1 for r in records if r.status != "ok"),
        malformed_lines=malformed,
    )
    print(summary.table())

    by_group: dict[tuple[str, str], list] = {}
    for rec in records:
        by_group.setdefault((rec.policy_label, rec.estimator_label), []).append(rec)
    rho_map = {r.problem_id: r.rho for r in records if r.rho is not None}
    for (pol, est), group in sorted(by_group.items()):
        print(f"\ncomplexity quartiles ({pol} / {est}):")
        print(quartile_report(group, rho_by_problem=rho_map).table())

    if args.out:
        summary.write_csv(args.out)
        print(f"\nCSV written to {args.out}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="adasolve", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: _Parser, *, config_required: bool = True) -> None:
        p.add_argument("--config", required=config_required, help="TOML run configuration")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--limit", type=int, default=None)
        p.add_argument(
            "--policy",
            choices=[k.value for k in PolicyKind],
            default=None,
            help="override the configured policy kind (report: filter records)",
        )
        p.add_argument(
            "--estimator",
            choices=[k.value for k in EstimatorKind],
            default=None,
            help="override the configured estimator kind (report: filter records)",
        )
        p.add_argument(
            "--rho-override",
            type=float,
            default=None,
            help="estimate only: print gate/budget decisions for this rho without estimating",
        )
        p.add_argument("--out", default=None, help="output path override")
        p.add_argument("--tau-dec", type=float, default=None, help="decomposition gate threshold")
        p.add_argument("--tau-low", type=float, default=None, help="easy/moderate tier boundary")
        p.add_argument("--tau-high", type=float, default=None, help="moderate/hard tier boundary")
        p.add_argument("--alpha", type=float, default=None, help="moderate-tier budget slope")
        p.add_argument("--b-max", type=int, default=None, help="hard-tier thought budget")

    p_est = sub.add_parser("estimate", help="profile a problem, no solver calls")
    add_common(p_est)
    p_est.add_argument("question", nargs="?", default=None)
    p_est.add_argument("--file", default=None, help="read the question from a file")
    p_est.set_defaults(func=cmd_estimate)

    p_solve = sub.add_parser("solve", help="solve one problem under the configured policy")
    add_common(p_solve)
    p_solve.add_argument("question", nargs="?", default=None)
    p_solve.add_argument("--file", default=None, help="read the question from a file")
    p_solve.add_argument("--id", default=None, help="problem id for the record")
    p_solve.set_defaults(func=cmd_solve)

    p_bench = sub.add_parser("bench", help="run a (resumable) benchmark sweep")
    add_common(p_bench)
    p_bench.add_argument("--policies", default=None, help="comma list of policy kinds to sweep")
    p_bench.add_argument(
        "--estimators", default=None, help="comma list of estimator kinds to sweep"
    )
    p_bench.set_defaults(func=cmd_bench)

    p_rep = sub.add_parser("report", help="render tables from persisted records (no network)")
    add_common(p_rep, config_required=False)
    p_rep.add_argument("records", help="records JSONL path")
    p_rep.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, LLMClientError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
