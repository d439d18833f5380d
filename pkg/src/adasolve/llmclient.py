"""Uniform client for chat-style model endpoints.

One remote protocol is supported: OpenAI-compatible chat completions over
HTTP POST to <base_url>/chat/completions with bearer-token auth read from
an environment variable. A deterministic scripted transport stands in for
the network in tests. The client layer adds capped-exponential-backoff
retries, request timeouts, a per-endpoint in-flight limit, and a token
usage fallback for servers that omit usage fields.
"""

from __future__ import annotations

import os
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import httpx

VALID_ROLES = ("system", "user", "assistant")

DEFAULT_TIMEOUT_S = 120.0
DEFAULT_MAX_ATTEMPTS = 3
DEFAULT_CONCURRENCY = 8
BACKOFF_BASE_S = 0.5
BACKOFF_CAP_S = 4.0


class LLMClientError(Exception):
    """Base class for client failures."""


class TransientEndpointError(LLMClientError):
    """Retryable failure: timeout, connection error, 429/5xx."""


class ProtocolError(LLMClientError):
    """Non-retryable failure: malformed response, 4xx, exhausted script."""


class RetriesExhaustedError(LLMClientError):
    """All attempts failed with transient errors."""

    def __init__(self, attempts: int, last: Exception):
        super().__init__(f"gave up after {attempts} attempts: {last}")
        self.attempts = attempts
        self.last = last


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int = 0
    completion_tokens: int = 0

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.prompt_tokens + other.prompt_tokens,
            self.completion_tokens + other.completion_tokens,
        )


ZERO_USAGE = TokenUsage(0, 0)

# A "token" for the fallback counter is a run of word characters or a
# single non-space punctuation character.
_FALLBACK_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def count_usage_fallback(prompt_text: str, completion_text: str) -> TokenUsage:
    """Approximate usage when an endpoint reports none (flagged by caller)."""
    return TokenUsage(
        prompt_tokens=len(_FALLBACK_TOKEN_RE.findall(prompt_text)),
        completion_tokens=len(_FALLBACK_TOKEN_RE.findall(completion_text)),
    )


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0
    max_tokens: int = 1024
    model_name: str = ""
    seed: int | None = None

    def __post_init__(self):
        if len(self.messages) < 1:
            raise ValueError("a chat request needs at least one message")
        for role, _ in self.messages:
            if role not in VALID_ROLES:
                raise ValueError(f"invalid message role: {role!r}")
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature!r}")

    @classmethod
    def user(cls, content: str, **kwargs) -> "ChatRequest":
        return cls(messages=(("user", content),), **kwargs)

    @property
    def prompt_text(self) -> str:
        return "\n".join(content for _, content in self.messages)


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: TokenUsage
    usage_is_approximate: bool = False
    attempts: int = 1


@dataclass
class ScriptEntry:
    """One scripted exchange: a matcher plus the canned reply and usage."""

    match: str = "*"
    reply: str = ""
    prompt_tokens: int = 0
    completion_tokens: int = 0
    transient_failures: int = 0   # raise this many transient errors first
    repeat: bool = False          # reusable instead of consumed
    omit_usage: bool = False      # exercise the fallback counter

    def matches(self, prompt_text: str) -> bool:
        return self.match in ("*", "any") or self.match in prompt_text


class ScriptedBackend:
    """Deterministic transport replaying an ordered script.

    In strict mode every request must match the next unconsumed entry; in
    loose mode the first unconsumed matching entry is used. Exhausting the
    script (or a strict mismatch) is a protocol error, not a retryable one.
    """

    def __init__(self, script: Sequence[ScriptEntry], strict: bool = False):
        self.script = list(script)
        self.strict = strict
        self.requests: list[ChatRequest] = []
        self._consumed = [False] * len(self.script)
        self._failures_left = [e.transient_failures for e in self.script]
        self._lock = threading.Lock()

    def _pick(self, prompt_text: str) -> int:
        if self.strict:
            for i, done in enumerate(self._consumed):
                if not done:
                    if not self.script[i].matches(prompt_text):
                        raise ProtocolError(
                            f"strict script mismatch at entry {i}: "
                            f"expected match {self.script[i].match!r}"
                        )
                    return i
            raise ProtocolError("script exhausted")
        for i, entry in enumerate(self.script):
            if not self._consumed[i] and entry.matches(prompt_text):
                return i
        raise ProtocolError(f"no script entry matches request: {prompt_text[:80]!r}")

    def send(self, request: ChatRequest) -> tuple[str, TokenUsage | None]:
        with self._lock:
            self.requests.append(request)
            i = self._pick(request.prompt_text)
            entry = self.script[i]
            if self._failures_left[i] > 0:
                self._failures_left[i] -= 1
                raise TransientEndpointError(f"scripted transient failure (entry {i})")
            if not entry.repeat:
                self._consumed[i] = True
            if entry.omit_usage:
                return entry.reply, None
            return entry.reply, TokenUsage(entry.prompt_tokens, entry.completion_tokens)


class HttpEndpoint:
    """OpenAI-compatible chat-completions transport."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "",
        timeout_s: float = DEFAULT_TIMEOUT_S,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout_s = timeout_s

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env, "") if self.api_key_env else ""
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def send(self, request: ChatRequest) -> tuple[str, TokenUsage | None]:
        payload: dict = {
            "model": request.model_name or self.model,
            "messages": [{"role": r, "content": c} for r, c in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.seed is not None:
            payload["seed"] = request.seed
        try:
            resp = httpx.post(
                f"{self.base_url}/chat/completions",
                json=payload,
                headers=self._headers(),
                timeout=self.timeout_s,
            )
        except httpx.TimeoutException as exc:
            raise TransientEndpointError(f"request timed out: {exc}") from exc
        except httpx.HTTPError as exc:
            raise TransientEndpointError(f"endpoint unreachable: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientEndpointError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code != 200:
            raise ProtocolError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed completion response: {exc}") from exc
        usage = None
        raw_usage = body.get("usage")
        if isinstance(raw_usage, dict):
            try:
                usage = TokenUsage(
                    int(raw_usage.get("prompt_tokens", 0)),
                    int(raw_usage.get("completion_tokens", 0)),
                )
            except (TypeError, ValueError):
                usage = None
        return text, usage


def backoff_delays(max_attempts: int, base_s: float = BACKOFF_BASE_S, cap_s: float = BACKOFF_CAP_S) -> list[float]:
    """Delays slept between attempts; each capped, so the total is bounded
    by (max_attempts - 1) * cap_s."""
    return [min(cap_s, base_s * (2.0**i)) for i in range(max_attempts - 1)]


class LLMClient:
    """Thread-safe wrapper adding retries and an in-flight limit.

    Shareable across concurrent callers; the semaphore enforces the
    per-endpoint concurrency limit.
    """

    def __init__(
        self,
        transport,
        *,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
        concurrency: int = DEFAULT_CONCURRENCY,
        sleep: Callable[[float], None] = time.sleep,
        name: str = "",
    ):
        self.transport = transport
        self.max_attempts = max(1, max_attempts)
        self.name = name
        self._sleep = sleep
        self._semaphore = threading.Semaphore(max(1, concurrency))

    def complete(self, request: ChatRequest) -> ChatResponse:
        delays = backoff_delays(self.max_attempts)
        last: Exception | None = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                with self._semaphore:
                    text, usage = self.transport.send(request)
            except TransientEndpointError as exc:
                last = exc
                if attempt < self.max_attempts:
                    self._sleep(delays[attempt - 1])
                continue
            approximate = usage is None
            if usage is None:
                usage = count_usage_fallback(request.prompt_text, text)
            return ChatResponse(text=text, usage=usage, usage_is_approximate=approximate, attempts=attempt)
        assert last is not None
        raise RetriesExhaustedError(self.max_attempts, last)


def scripted_client(
    entries: Sequence[ScriptEntry],
    *,
    strict: bool = False,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    name: str = "scripted",
) -> LLMClient:
    """Client over a scripted transport with no real backoff sleeping."""
    return LLMClient(
        ScriptedBackend(entries, strict=strict),
        max_attempts=max_attempts,
        sleep=lambda _s: None,
        name=name,
    )
