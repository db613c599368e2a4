"""Chat-completion backends behind one ``complete`` call.

Two kinds exist: :class:`HttpChatBackend` talks to any chat-completions
endpoint, :class:`ScriptedMock` replays canned or generated replies. Both share
cap checks, a per-backend concurrency bound, optional token-bucket rate
limiting, and retry with exponential backoff.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import os
import threading
import time
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Callable, Sequence, Union

import httpx

from .errors import ConfigError, ExactLenError

log = logging.getLogger(__name__)

__all__ = [
    "DecodingParams",
    "BackendCaps",
    "BackendKind",
    "Completion",
    "RetryPolicy",
    "TokenBucket",
    "ModelBackend",
    "HttpChatBackend",
    "ScriptedMock",
    "complete",
    "CATEGORY_TEMPERATURES",
    "model_registry",
    "caps_for_model",
    "GatewayError",
    "AuthError",
    "RateLimitError",
    "GatewayTimeout",
    "OverCapError",
    "BackendError",
]

# Per-category sampling temperatures for MT-Bench style prompts.
CATEGORY_TEMPERATURES: dict[str, float] = {
    "writing": 0.7,
    "roleplay": 0.7,
    "stem": 0.1,
    "humanities": 0.1,
    "extraction": 0.0,
    "math": 0.0,
    "coding": 0.0,
    "reasoning": 0.0,
}


class GatewayError(ExactLenError):
    pass


class AuthError(GatewayError):
    pass


class RateLimitError(GatewayError):
    """Rate limited on every attempt."""


class GatewayTimeout(GatewayError):
    pass


class OverCapError(GatewayError, ValueError):
    pass


class BackendError(GatewayError):
    pass


class _Transient(Exception):
    def __init__(self, kind: str, message: str, retry_after: float | None = None):
        super().__init__(message)
        self.kind = kind
        self.retry_after = retry_after


@dataclass(frozen=True)
class DecodingParams:
    temperature: float = 1.0
    top_p: float = 0.95
    max_completion_tokens: int = 16384
    seed: int | None = None
    extra: dict = field(default_factory=dict, hash=False)

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if self.max_completion_tokens < 1:
            raise ValueError("max_completion_tokens must be positive")

    def replace(self, **changes) -> "DecodingParams":
        return DecodingParams(**{**asdict(self), **changes})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BackendCaps:
    max_completion_tokens: int = 131072
    max_temperature: float = 2.0


class BackendKind(str, enum.Enum):
    HTTP_CHAT = "http"
    SCRIPTED_MOCK = "mock"


@dataclass
class Completion:
    text: str
    finish_reason: str = "stop"
    truncated: bool = False
    prompt_tokens: int | None = None
    completion_tokens: int | None = None
    latency_s: float = 0.0
    attempts: int = 1

    def usage(self) -> dict:
        return {
            "finish_reason": self.finish_reason,
            "truncated": self.truncated,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "latency_s": self.latency_s,
            "attempts": self.attempts,
        }


@dataclass
class RetryPolicy:
    max_attempts: int = 5
    base_delay: float = 1.0
    multiplier: float = 2.0
    max_delay: float = 30.0
    sleep: Callable[[float], None] = time.sleep

    def delay(self, attempt: int, retry_after: float | None = None) -> float:
        d = min(self.max_delay, self.base_delay * self.multiplier ** (attempt - 1))
        if retry_after is not None:
            d = max(d, min(retry_after, self.max_delay))
        return d


class TokenBucket:
    """Blocking token bucket: ``rate`` requests per second, bursts up to ``capacity``."""

    def __init__(self, rate: float, capacity: float | None = None, clock=time.monotonic, sleep=time.sleep):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(1.0, rate)
        self._tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1:
                    self._tokens -= 1
                    return
                wait = (1 - self._tokens) / self.rate
            self._sleep(wait)


PromptLike = Union["RenderedPrompt", str]  # noqa: F821


def _messages(prompt, system_prompt: str | None) -> list[dict]:
    if isinstance(prompt, str):
        user, system = prompt, system_prompt
    else:
        user, system = prompt.full_text, prompt.system_text or system_prompt
    msgs = []
    if system:
        msgs.append({"role": "system", "content": system})
    msgs.append({"role": "user", "content": user})
    return msgs


class ModelBackend:
    kind: BackendKind

    def __init__(
        self,
        id: str,
        *,
        caps: BackendCaps | None = None,
        max_concurrency: int = 8,
        requests_per_second: float | None = None,
        retry: RetryPolicy | None = None,
        system_prompt: str | None = None,
    ):
        self.id = id
        self.caps = caps or BackendCaps()
        self.max_concurrency = max_concurrency
        self.retry = retry or RetryPolicy()
        self.system_prompt = system_prompt
        self._slots = threading.BoundedSemaphore(max_concurrency)
        self._limiter = TokenBucket(requests_per_second) if requests_per_second else None

    def check_params(self, params: DecodingParams) -> None:
        if params.max_completion_tokens > self.caps.max_completion_tokens:
            raise OverCapError(
                f"{self.id}: max_completion_tokens {params.max_completion_tokens} "
                f"exceeds cap {self.caps.max_completion_tokens}"
            )
        if params.temperature > self.caps.max_temperature:
            raise OverCapError(f"{self.id}: temperature {params.temperature} exceeds cap {self.caps.max_temperature}")

    def complete(self, prompt: PromptLike, params: DecodingParams | None = None) -> Completion:
        params = params or DecodingParams(max_completion_tokens=min(16384, self.caps.max_completion_tokens))
        self.check_params(params)
        messages = _messages(prompt, self.system_prompt)
        attempt = 0
        start = time.perf_counter()
        while True:
            attempt += 1
            try:
                with self._slots:
                    if self._limiter:
                        self._limiter.acquire()
                    result = self._send(prompt, messages, params)
            except _Transient as exc:
                if attempt >= self.retry.max_attempts:
                    raise self._exhausted(exc, attempt) from None
                delay = self.retry.delay(attempt, exc.retry_after)
                log.warning("%s: %s (attempt %d/%d), retrying in %.1fs",
                            self.id, exc, attempt, self.retry.max_attempts, delay)
                self.retry.sleep(delay)
                continue
            result.attempts = attempt
            result.latency_s = time.perf_counter() - start
            return result

    def _exhausted(self, exc: _Transient, attempts: int) -> GatewayError:
        msg = f"{self.id}: {exc} after {attempts} attempts"
        if exc.kind == "rate_limit":
            return RateLimitError(msg)
        if exc.kind == "timeout":
            return GatewayTimeout(msg)
        return BackendError(msg)

    def _send(self, prompt, messages: list[dict], params: DecodingParams) -> Completion:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def describe(self) -> dict:
        return {"id": self.id, "kind": self.kind.value, "max_concurrency": self.max_concurrency,
                "caps": asdict(self.caps)}


class HttpChatBackend(ModelBackend):
    """OpenAI-style ``POST .../chat/completions`` client.

    The API key is read from the environment variable named by ``secret_env``
    at call time and is never stored on the instance.
    """

    kind = BackendKind.HTTP_CHAT

    def __init__(
        self,
        id: str,
        endpoint: str,
        *,
        model: str | None = None,
        secret_env: str | None = None,
        timeout: float = 600.0,
        max_tokens_field: str = "max_tokens",
        headers: dict | None = None,
        transport: httpx.BaseTransport | None = None,
        **kwargs,
    ):
        if not endpoint:
            raise ConfigError(f"{id}: an HTTP backend needs an endpoint")
        if "caps" not in kwargs and model:
            kwargs["caps"] = caps_for_model(model)
        super().__init__(id, **kwargs)
        self.endpoint = endpoint
        self.model = model or id
        self.secret_env = secret_env
        self.max_tokens_field = max_tokens_field
        self._headers = dict(headers or {})
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def _auth_headers(self) -> dict:
        if not self.secret_env:
            return {}
        key = os.environ.get(self.secret_env)
        if not key:
            raise AuthError(f"{self.id}: environment variable {self.secret_env} is not set")
        return {"Authorization": f"Bearer {key}"}

    def payload(self, messages: list[dict], params: DecodingParams) -> dict:
        body = {
            "model": self.model,
            "messages": messages,
            "temperature": params.temperature,
            "top_p": params.top_p,
            self.max_tokens_field: params.max_completion_tokens,
        }
        if params.seed is not None:
            body["seed"] = params.seed
        body.update(params.extra)
        return body

    def _send(self, prompt, messages, params) -> Completion:
        headers = {"Content-Type": "application/json", **self._headers, **self._auth_headers()}
        try:
            resp = self._client.post(self.endpoint, json=self.payload(messages, params), headers=headers)
        except httpx.TimeoutException as exc:
            raise _Transient("timeout", f"timeout: {exc}") from None
        except httpx.TransportError as exc:
            raise _Transient("transport", f"transport error: {exc}") from None

        if resp.status_code in (401, 403):
            raise AuthError(f"{self.id}: HTTP {resp.status_code} {resp.text[:200]}")
        if resp.status_code == 429:
            retry_after = resp.headers.get("retry-after")
            raise _Transient("rate_limit", "HTTP 429",
                             float(retry_after) if retry_after and retry_after.replace(".", "", 1).isdigit() else None)
        if resp.status_code == 408 or resp.status_code >= 500:
            raise _Transient("server", f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise BackendError(f"{self.id}: HTTP {resp.status_code} {resp.text[:200]}")

        try:
            data = resp.json()
            choice = data["choices"][0]
            text = choice["message"].get("content") or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"{self.id}: malformed response ({exc})") from None
        finish = choice.get("finish_reason") or "stop"
        usage = data.get("usage") or {}
        return Completion(
            text=text,
            finish_reason=finish,
            truncated=finish == "length",
            prompt_tokens=usage.get("prompt_tokens"),
            completion_tokens=usage.get("completion_tokens"),
        )

    def close(self) -> None:
        self._client.close()

    def describe(self) -> dict:
        return {**super().describe(), "endpoint": self.endpoint, "model": self.model, "secret_env": self.secret_env}


ReplyFn = Callable[[object, int], str]


class ScriptedMock(ModelBackend):
    """Deterministic backend: reply *i* is a pure function of (script, i, prompt).

    ``script`` is either a sequence of canned replies, cycled, or a callable
    ``(prompt, call_index) -> str``. Completions longer than
    ``max_completion_tokens`` (estimated at four characters per token) are cut
    and flagged as truncated.
    """

    kind = BackendKind.SCRIPTED_MOCK

    def __init__(self, id: str, script: Sequence[str] | ReplyFn, **kwargs):
        if script is None or (not callable(script) and len(script) == 0):
            raise ConfigError(f"{id}: a scripted mock needs a non-empty script")
        super().__init__(id, **kwargs)
        self._script = script
        self._lock = threading.Lock()
        self._calls = 0
        self.prompts: list = []
        self.in_flight = 0
        self.peak_in_flight = 0
        self.delay_s = 0.0

    @property
    def calls(self) -> int:
        return self._calls

    def reply_for(self, prompt, index: int) -> str:
        if callable(self._script):
            return self._script(prompt, index)
        return self._script[index % len(self._script)]

    def _send(self, prompt, messages, params) -> Completion:
        with self._lock:
            index = self._calls
            self._calls += 1
            self.prompts.append(prompt)
            self.in_flight += 1
            self.peak_in_flight = max(self.peak_in_flight, self.in_flight)
        try:
            if self.delay_s:
                time.sleep(self.delay_s)
            text = self.reply_for(prompt, index)
        finally:
            with self._lock:
                self.in_flight -= 1
        est_tokens = math.ceil(len(text) / 4)
        if est_tokens > params.max_completion_tokens:
            return Completion(text[: params.max_completion_tokens * 4], "length", True,
                              completion_tokens=params.max_completion_tokens)
        return Completion(text, "stop", False, completion_tokens=est_tokens)


def complete(backend: ModelBackend, prompt: PromptLike, params: DecodingParams | None = None) -> Completion:
    return backend.complete(prompt, params)


@lru_cache(maxsize=1)
def model_registry() -> dict:
    raw = resources.files(__package__).joinpath("data", "models.json").read_text(encoding="utf-8")
    return json.loads(raw)


def caps_for_model(model: str) -> BackendCaps:
    """Caps from the registry, matched on the longest registered name prefix."""
    models = model_registry()["models"]
    name = model.lower()
    matches = [k for k in models if name.startswith(k)]
    if not matches:
        return BackendCaps()
    entry = models[max(matches, key=len)]
    return BackendCaps(max_completion_tokens=entry["max_completion_tokens"])
