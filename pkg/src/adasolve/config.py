"""Run configuration: TOML file with environment-variable interpolation.

``${VAR}`` inside any string value is replaced from the environment, so
secrets never sit in the file or on the command line. Endpoints live in an
``[endpoints.<name>]`` table; an endpoint is either ``type = "http"``
(OpenAI-compatible, bearer token read from ``api_key_env``) or
``type = "scripted"`` pointing at a JSON script file for offline runs.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .answers import DatasetKind
from .estimator import EstimatorBackend, EstimatorKind
from .llmclient import (
    DEFAULT_CONCURRENCY,
    DEFAULT_MAX_ATTEMPTS,
    DEFAULT_TIMEOUT_S,
    HttpEndpoint,
    LLMClient,
    ScriptEntry,
    ScriptedBackend,
)
from .policy import PolicyKind, PolicyParams, SolvePolicy
from .profile import SolverClass

_ENV_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


class ConfigError(ValueError):
    """The run configuration is missing, malformed, or inconsistent."""


def _interpolate(value):
    if isinstance(value, str):

        def repl(m: re.Match) -> str:
            name = m.group(1)
            if name not in os.environ:
                raise ConfigError(f"config references unset environment variable {name}")
            return os.environ[name]

        return _ENV_RE.sub(repl, value)
    if isinstance(value, dict):
        return {k: _interpolate(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_interpolate(v) for v in value]
    return value


@dataclass(frozen=True)
class EndpointConfig:
    name: str
    type: str = "http"
    base_url: str = ""
    model: str = ""
    api_key_env: str = ""
    timeout_s: float = DEFAULT_TIMEOUT_S
    max_attempts: int = DEFAULT_MAX_ATTEMPTS
    concurrency: int = DEFAULT_CONCURRENCY
    script: str = ""
    strict: bool = False


@dataclass
class RunConfig:
    endpoints: dict[str, EndpointConfig] = field(default_factory=dict)
    estimator_kind: EstimatorKind = EstimatorKind.HEURISTIC
    estimator_endpoint: str = ""
    feature_mask: tuple[str, ...] = ()
    solver_endpoint: str = ""
    policy: SolvePolicy = field(default_factory=SolvePolicy)
    solver_class: SolverClass = SolverClass.B7
    dataset_path: str = ""
    dataset_kind: DatasetKind = DatasetKind.GSM8K
    records_path: str = "records.jsonl"
    workers: int = 1
    limit: int | None = None
    seed: int | None = None
    max_tokens: int = 1024
    max_depth: int = 1
    base_dir: Path = field(default_factory=Path)

    def resolve_path(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else self.base_dir / path


def _endpoint_from_table(name: str, table: dict) -> EndpointConfig:
    known = {
        "type",
        "base_url",
        "model",
        "api_key_env",
        "timeout_s",
        "max_attempts",
        "concurrency",
        "script",
        "strict",
    }
    unknown = set(table) - known
    if unknown:
        raise ConfigError(f"endpoint {name!r}: unknown key(s) {sorted(unknown)}")
    cfg = EndpointConfig(
        name=name,
        type=table.get("type", "http"),
        base_url=table.get("base_url", ""),
        model=table.get("model", ""),
        api_key_env=table.get("api_key_env", ""),
        timeout_s=float(table.get("timeout_s", DEFAULT_TIMEOUT_S)),
        max_attempts=int(table.get("max_attempts", DEFAULT_MAX_ATTEMPTS)),
        concurrency=int(table.get("concurrency", DEFAULT_CONCURRENCY)),
        script=table.get("script", ""),
        strict=bool(table.get("strict", False)),
    )
    if cfg.type == "http" and not cfg.base_url:
        raise ConfigError(f"endpoint {name!r}: http endpoints need base_url")
    if cfg.type == "scripted" and not cfg.script:
        raise ConfigError(f"endpoint {name!r}: scripted endpoints need a script path")
    if cfg.type not in ("http", "scripted"):
        raise ConfigError(f"endpoint {name!r}: unknown type {cfg.type!r}")
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    raw = _interpolate(raw)

    endpoints = {
        name: _endpoint_from_table(name, table)
        for name, table in (raw.get("endpoints") or {}).items()
    }

    pol = raw.get("policy") or {}
    try:
        kind = PolicyKind(pol.get("kind", "adaptive"))
    except ValueError as exc:
        raise ConfigError(f"unknown policy kind: {pol.get('kind')!r}") from exc
    try:
        params = PolicyParams(
            tau_dec=float(pol.get("tau_dec", 3.0)),
            tau_low=float(pol.get("tau_low", 3.0)),
            tau_high=float(pol.get("tau_high", 6.0)),
            alpha=float(pol.get("alpha", 1.5)),
            B_max=int(pol.get("b_max", 10)),
        )
        policy = SolvePolicy(
            kind=kind,
            fixed_K=int(pol["fixed_k"]) if "fixed_k" in pol else None,
            fixed_B=int(pol["fixed_b"]) if "fixed_b" in pol else None,
            params=params,
        )
    except ValueError as exc:
        raise ConfigError(f"invalid policy: {exc}") from exc

    est = raw.get("estimator") or {}
    try:
        est_kind = EstimatorKind(est.get("kind", "heuristic"))
    except ValueError as exc:
        raise ConfigError(f"unknown estimator kind: {est.get('kind')!r}") from exc

    ds = raw.get("dataset") or {}
    try:
        ds_kind = DatasetKind(ds.get("kind", "gsm8k"))
    except ValueError as exc:
        raise ConfigError(f"unknown dataset kind: {ds.get('kind')!r}") from exc

    out = raw.get("output") or {}
    run = raw.get("run") or {}
    try:
        solver_class = SolverClass(run.get("solver_class", "7B"))
    except ValueError as exc:
        raise ConfigError(f"unknown solver_class: {run.get('solver_class')!r}") from exc

    cfg = RunConfig(
        endpoints=endpoints,
        estimator_kind=est_kind,
        estimator_endpoint=est.get("endpoint", ""),
        feature_mask=tuple(est.get("mask", ())),
        solver_endpoint=(raw.get("solver") or {}).get("endpoint", ""),
        policy=policy,
        solver_class=solver_class,
        dataset_path=ds.get("path", ""),
        dataset_kind=ds_kind,
        records_path=out.get("records", "records.jsonl"),
        workers=int(run.get("workers", 1)),
        limit=int(run["limit"]) if "limit" in run else None,
        seed=int(run["seed"]) if "seed" in run else None,
        max_tokens=int(run.get("max_tokens", 1024)),
        max_depth=int(run.get("max_depth", 1)),
        base_dir=path.parent,
    )
    for ref, label in ((cfg.estimator_endpoint, "estimator"), (cfg.solver_endpoint, "solver")):
        if ref and ref not in cfg.endpoints:
            raise ConfigError(f"{label} endpoint {ref!r} not in the endpoint table")
    return cfg


def _load_script(path: Path) -> list[ScriptEntry]:
    try:
        entries = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read script {path}: {exc}") from exc
    if not isinstance(entries, list):
        raise ConfigError(f"script {path} must be a JSON array of entries")
    out = []
    for e in entries:
        out.append(
            ScriptEntry(
                match=e.get("match", "*"),
                reply=e.get("reply", ""),
                prompt_tokens=int(e.get("prompt_tokens", 0)),
                completion_tokens=int(e.get("completion_tokens", 0)),
                transient_failures=int(e.get("transient_failures", 0)),
                repeat=bool(e.get("repeat", False)),
                omit_usage=bool(e.get("omit_usage", False)),
            )
        )
    return out


def build_client(cfg: RunConfig, endpoint_name: str) -> LLMClient:
    if endpoint_name not in cfg.endpoints:
        raise ConfigError(f"endpoint {endpoint_name!r} not in the endpoint table")
    ep = cfg.endpoints[endpoint_name]
    if ep.type == "scripted":
        transport = ScriptedBackend(_load_script(cfg.resolve_path(ep.script)), strict=ep.strict)
        return LLMClient(
            transport,
            max_attempts=ep.max_attempts,
            concurrency=ep.concurrency,
            sleep=lambda _s: None,
            name=ep.name,
        )
    transport = HttpEndpoint(
        base_url=ep.base_url,
        model=ep.model,
        api_key_env=ep.api_key_env,
        timeout_s=ep.timeout_s,
    )
    return LLMClient(
        transport, max_attempts=ep.max_attempts, concurrency=ep.concurrency, name=ep.name
    )


def build_estimator(cfg: RunConfig) -> EstimatorBackend:
    mask = frozenset(cfg.feature_mask) if cfg.feature_mask else None
    if cfg.estimator_kind is EstimatorKind.HEURISTIC:
        return EstimatorBackend(kind=cfg.estimator_kind, feature_mask=mask)
    if not cfg.estimator_endpoint:
        raise ConfigError(
            f"estimator kind {cfg.estimator_kind.value!r} needs [estimator].endpoint"
        )
    return EstimatorBackend(
        kind=cfg.estimator_kind,
        endpoint=build_client(cfg, cfg.estimator_endpoint),
        feature_mask=mask,
    )
