"""Remote chat-completion agents.

One vendor-agnostic client speaks the generic chat-completions shape
(messages array in, choices[0].message.content out). Transient failures
(429/5xx/timeouts) are retried with exponential backoff; a per-endpoint
token bucket throttles request rates across concurrent negotiations.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import requests

from ..actions import ParseReport, TurnParseError, parse_turn
from ..domain import Money, Role, Scenario
from .base import AgentError, TurnAttempt, TurnContext
from .prompts import DEFAULT_TEMPLATE, assemble_prompt

RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


class TransportError(AgentError):
    def __init__(self, status: int, detail: str = ""):
        self.status = status
        super().__init__(f"transport error {status}: {detail}".strip())


class TimeoutError_(AgentError):
    pass


class AuthMissing(AgentError):
    pass


@dataclass
class RetryPolicy:
    max_retries: int = 3
    base_delay: float = 1.0
    factor: float = 2.0


@dataclass
class RemoteConfig:
    endpoint: str  # full chat-completions URL
    model: str
    auth_env: Optional[str] = None  # env var holding the API key; never stored
    temperature: float = 1.0
    timeout_s: float = 60.0
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    rate_per_s: Optional[float] = None
    reprompt_budget: int = 1

    def headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.auth_env:
            key = os.environ.get(self.auth_env)
            if not key:
                raise AuthMissing(f"environment variable {self.auth_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        return headers


class TokenBucket:
    """Simple thread-safe rate limiter: `rate` tokens/second, burst = capacity."""

    def __init__(self, rate: float, capacity: Optional[float] = None,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(1.0, rate)
        self._tokens = self.capacity
        self._stamp = clock()
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._stamp) * self.rate)
                self._stamp = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


@dataclass
class ClientStats:
    requests: int = 0
    retries: int = 0


class ChatClient:
    """Shared per-endpoint HTTP client with retry, backoff, and throttling."""

    def __init__(self, config: RemoteConfig,
                 session: Optional[requests.Session] = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self.session = session or requests.Session()
        self.sleep = sleep
        self.bucket = TokenBucket(config.rate_per_s) if config.rate_per_s else None
        self.stats = ClientStats()
        self._lock = threading.Lock()

    def complete(self, messages: list[dict]) -> tuple[str, dict]:
        """POST the conversation; returns (completion text, usage dict)."""
        body = {
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
        }
        headers = self.config.headers()
        retry = self.config.retry
        delay = retry.base_delay
        last_failure = "no attempt made"
        for attempt in range(retry.max_retries + 1):
            if attempt:
                with self._lock:
                    self.stats.retries += 1
                self.sleep(delay)
                delay *= retry.factor
            if self.bucket is not None:
                self.bucket.acquire()
            with self._lock:
                self.stats.requests += 1
            try:
                response = self.session.post(
                    self.config.endpoint, json=body, headers=headers,
                    timeout=self.config.timeout_s,
                )
            except requests.Timeout:
                last_failure = "request timed out"
                continue
            except requests.RequestException as exc:
                raise TransportError(0, str(exc)) from exc
            if response.status_code in RETRYABLE_STATUS:
                last_failure = f"status {response.status_code}"
                continue
            if response.status_code != 200:
                raise TransportError(response.status_code, response.text[:200])
            try:
                data = response.json()
                text = data["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise TransportError(200, f"malformed completion payload: {exc}") from exc
            return text, data.get("usage") or {}
        if last_failure == "request timed out":
            raise TimeoutError_(f"gave up after {retry.max_retries} retries: {last_failure}")
        raise TransportError(429, f"gave up after {retry.max_retries} retries: {last_failure}")


REPROMPT_INSTRUCTIONS = (
    "Your last reply could not be executed: {diagnostic}. "
    "Reply again with a `Thought:` block followed by a `Code:` block "
    "containing 1-3 valid tool calls, one per line."
)


class RemoteAgent:
    """Drives one negotiation side through a remote chat model.

    The conversation transcript lives here: each engine observation is
    appended as a user message and each completion as an assistant
    message. A turn that fails to parse is reprompted once with the
    diagnostic; if it fails again, the turn is recorded as unparseable.
    """

    def __init__(self, role: Role, client: ChatClient, name: Optional[str] = None,
                 template: str = DEFAULT_TEMPLATE):
        self.role = role
        self.client = client
        self.name = name or client.config.model
        self.template = template
        self.messages: list[dict] = []

    def begin(self, scenario: Scenario, listing_price: Money) -> None:
        bundle = assemble_prompt(scenario, self.role, self.template, listing_price)
        self.messages = [{"role": "system", "content": bundle.system}]

    def _user_update(self, ctx: TurnContext) -> str:
        parts = []
        if ctx.tool_results:
            parts.extend(ctx.tool_results)
        parts.append(ctx.observation_text or "The negotiation is open.")
        if ctx.pending_offer is not None:
            parts.append(
                f"A pending offer of {ctx.pending_offer.price.pretty()} from the "
                f"{ctx.pending_offer.by.value} awaits your response."
            )
        parts.append(
            f"Round {ctx.round_number} of {ctx.max_rounds}. Take your turn."
        )
        return "\n".join(parts)

    def take_turn(self, ctx: TurnContext) -> TurnAttempt:
        self.messages.append({"role": "user", "content": self._user_update(ctx)})
        usage_total: dict[str, int] = {}
        reprompted = False
        raw = ""
        for attempt in range(self.client.config.reprompt_budget + 1):
            raw, usage = self.client.complete(self.messages)
            for key, value in (usage or {}).items():
                if isinstance(value, (int, float)):
                    usage_total[key] = usage_total.get(key, 0) + int(value)
            self.messages.append({"role": "assistant", "content": raw})
            try:
                output = parse_turn(raw)
            except TurnParseError as exc:
                if attempt < self.client.config.reprompt_budget:
                    reprompted = True
                    self.messages.append({
                        "role": "user",
                        "content": REPROMPT_INSTRUCTIONS.format(diagnostic=str(exc)),
                    })
                    continue
                report = exc.report()
                report.reprompted = reprompted
                return TurnAttempt(raw=raw, output=None, report=report, usage=usage_total)
            report = ParseReport(parseable=True, reprompted=reprompted)
            return TurnAttempt(raw=raw, output=output, report=report, usage=usage_total)
        raise AssertionError("unreachable")  # pragma: no cover
