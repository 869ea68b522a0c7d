"""Completion backends.

Two implementations of one tiny contract: send a prompt, get text back with
usage accounting.  ``HttpProvider`` talks to an OpenAI-style chat endpoint;
``ScriptedProvider`` replays canned replies for deterministic runs and tests.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass
from typing import Any, Callable, Optional, Protocol, Sequence

import requests

from .domain import UsageRecord
from .errors import ProviderError, ProviderTimeout


@dataclass(frozen=True)
class CompletionParams:
    model_name: str = ""
    temperature: float = 0.0
    top_p: float = 1.0
    max_output_tokens: int = 512


@dataclass(frozen=True)
class CompletionResult:
    text: str
    usage: UsageRecord


class Provider(Protocol):
    def complete(
        self, prompt: str, params: Optional[CompletionParams] = None
    ) -> CompletionResult: ...


def estimate_tokens(text: str) -> int:
    """Whitespace token count, used when a backend reports no usage."""
    return len(text.split())


class ScriptedProvider:
    """Replays a fixed reply sequence in FIFO order.

    Records every prompt it receives so tests can assert on exact prompt
    bytes.  Raises ProviderError once the script runs dry.  Thread-safe:
    concurrent callers each consume one scripted reply.
    """

    def __init__(
        self,
        replies: Sequence[str],
        token_counts: Optional[Sequence[Optional[int]]] = None,
    ) -> None:
        if token_counts is not None and len(token_counts) != len(replies):
            raise ValueError("token_counts must align one-to-one with replies")
        self._replies = list(replies)
        self._token_counts = list(token_counts) if token_counts is not None else None
        self._lock = threading.Lock()
        self._cursor = 0
        self.prompts: list[str] = []

    @property
    def call_count(self) -> int:
        return self._cursor

    @property
    def remaining(self) -> int:
        return len(self._replies) - self._cursor

    def complete(
        self, prompt: str, params: Optional[CompletionParams] = None
    ) -> CompletionResult:
        with self._lock:
            if self._cursor >= len(self._replies):
                raise ProviderError(
                    f"script exhausted after {len(self._replies)} replies"
                )
            index = self._cursor
            self._cursor += 1
            self.prompts.append(prompt)
        reply = self._replies[index]
        declared = self._token_counts[index] if self._token_counts else None
        usage = UsageRecord(
            input_tokens=estimate_tokens(prompt),
            output_tokens=declared if declared is not None else estimate_tokens(reply),
            wall_time_ms=0,
            provider_calls=1,
            estimated=declared is None,
        )
        return CompletionResult(text=reply, usage=usage)


def scripted_load(
    replies: Sequence[str],
    token_counts: Optional[Sequence[Optional[int]]] = None,
) -> ScriptedProvider:
    """Build a scripted backend from a reply list (optionally with declared
    per-reply output token counts)."""
    return ScriptedProvider(replies, token_counts)


# Status codes worth retrying: rate limits and server-side failures.
_RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


class HttpProvider:
    """Chat-completions client over HTTP.

    ``endpoint`` is the full completions URL.  The bearer credential is read
    from the environment variable named by ``credential_env`` at call time;
    absence is tolerated here (some proxies need no key) and enforced by the
    CLI, which refuses to start a run without the variable set.
    """

    def __init__(
        self,
        endpoint: str,
        model_name: str = "",
        credential_env: str = "OPENAI_API_KEY",
        timeout_s: float = 60.0,
        max_retries: int = 3,
        backoff_s: float = 0.5,
        post: Optional[Callable[..., Any]] = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if max_retries < 0:
            raise ValueError("max_retries must be non-negative")
        self.endpoint = endpoint
        self.model_name = model_name
        self.credential_env = credential_env
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self._post = post if post is not None else requests.post
        self._sleep = sleep

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        credential = os.environ.get(self.credential_env, "")
        if credential:
            headers["Authorization"] = f"Bearer {credential}"
        return headers

    def complete(
        self, prompt: str, params: Optional[CompletionParams] = None
    ) -> CompletionResult:
        p = params or CompletionParams(model_name=self.model_name)
        body = {
            "model": p.model_name or self.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": p.temperature,
            "top_p": p.top_p,
            "max_tokens": p.max_output_tokens,
        }
        attempts = self.max_retries + 1
        last_error: Optional[Exception] = None
        timed_out = False
        started = time.monotonic()
        for attempt in range(attempts):
            if attempt:
                self._sleep(self.backoff_s * (2 ** (attempt - 1)))
            try:
                response = self._post(
                    self.endpoint,
                    json=body,
                    headers=self._headers(),
                    timeout=self.timeout_s,
                )
            except requests.Timeout as exc:
                last_error, timed_out = exc, True
                continue
            except requests.RequestException as exc:
                last_error, timed_out = exc, False
                continue
            status = getattr(response, "status_code", 0)
            if status in _RETRYABLE_STATUS:
                last_error = ProviderError(f"backend returned status {status}")
                timed_out = False
                continue
            if status != 200:
                raise ProviderError(f"backend returned status {status}")
            return self._parse(response, prompt, started)
        if timed_out:
            raise ProviderTimeout(
                f"no reply within {self.timeout_s}s after {attempts} attempts"
            ) from last_error
        raise ProviderError(f"completion failed after {attempts} attempts") from last_error

    def _parse(self, response: Any, prompt: str, started: float) -> CompletionResult:
        try:
            payload = response.json()
            text = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ProviderError(f"malformed completion payload: {exc}") from exc
        if text is None:
            raise ProviderError("completion payload carried no text")
        wall_ms = int((time.monotonic() - started) * 1000)
        reported = payload.get("usage") or {}
        if "prompt_tokens" in reported and "completion_tokens" in reported:
            usage = UsageRecord(
                input_tokens=int(reported["prompt_tokens"]),
                output_tokens=int(reported["completion_tokens"]),
                wall_time_ms=wall_ms,
                provider_calls=1,
                estimated=False,
            )
        else:
            usage = UsageRecord(
                input_tokens=estimate_tokens(prompt),
                output_tokens=estimate_tokens(text),
                wall_time_ms=wall_ms,
                provider_calls=1,
                estimated=True,
            )
        return CompletionResult(text=text, usage=usage)
