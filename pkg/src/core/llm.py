"""Completion backends and the sampling plan.

Every backend exposes ``complete(CompletionRequest) -> str``. Reliability
concerns (rate limiting, retries) and determinism concerns (record/replay
cache, scripted mock) are separate wrappers so any stack can be composed.
"""

from __future__ import annotations

import fnmatch
import hashlib
import json
import os
import threading
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import requests

from .errors import (
    AllSamplesFailed,
    BackendError,
    CacheCorrupt,
    RetryableBackendError,
    ValidationError,
)
from .prompts import extract_buggy_code

DEFAULT_API_KEY_ENV = "CORE_LLM_API_KEY"
RETRYABLE_STATUSES = (429, 500, 502, 503, 504)


@dataclass(frozen=True)
class RequestTag:
    """Stable identity of one completion request within a run."""

    file_id: str
    unit: str
    sample_index: int

    def key(self) -> str:
        return f"{self.file_id}:{self.unit}"


@dataclass(frozen=True)
class CompletionRequest:
    prompt_text: str
    temperature: float
    max_output_tokens: int
    tag: RequestTag

    def __post_init__(self):
        if self.max_output_tokens <= 0:
            raise ValidationError("max_output_tokens must be positive")
        if self.temperature < 0:
            raise ValidationError("temperature must be nonnegative")


@dataclass(frozen=True)
class SamplingPlan:
    """(temperature, count) steps; requests are issued in step order."""

    steps: tuple[tuple[float, int], ...]

    def __post_init__(self):
        if self.total() < 1:
            raise ValidationError("sampling plan must request at least one sample")
        for temperature, count in self.steps:
            if temperature < 0 or count < 1:
                raise ValidationError(f"bad plan step ({temperature}, {count})")

    def total(self) -> int:
        return sum(count for _, count in self.steps)

    def temperatures(self) -> list[float]:
        out = []
        for temperature, count in self.steps:
            out.extend([temperature] * count)
        return out

    @classmethod
    def parse(cls, text: str) -> "SamplingPlan":
        steps = []
        for part in text.split(","):
            temperature, _, count = part.strip().partition(":")
            try:
                steps.append((float(temperature), int(count)))
            except ValueError as e:
                raise ValidationError(f"bad sampling plan {text!r}: {e}") from e
        return cls(tuple(steps))


DEFAULT_PLAN = SamplingPlan(((0.0, 1), (0.75, 6), (1.0, 3)))


@dataclass(frozen=True)
class Sample:
    text: str
    temperature: float
    sample_index: int


@dataclass
class SampleBatch:
    samples: list[Sample]
    failures: list[tuple[int, str]]


def sample(
    backend,
    prompt_text: str,
    plan: SamplingPlan,
    file_id: str = "",
    unit: str = "u0",
    max_output_tokens: int = 2048,
) -> SampleBatch:
    """Issue the plan's requests; keep going while at least one succeeds."""
    samples: list[Sample] = []
    failures: list[tuple[int, str]] = []
    index = 0
    for temperature in plan.temperatures():
        tag = RequestTag(file_id=file_id, unit=unit, sample_index=index)
        request = CompletionRequest(
            prompt_text=prompt_text,
            temperature=temperature,
            max_output_tokens=max_output_tokens,
            tag=tag,
        )
        try:
            text = backend.complete(request)
            samples.append(Sample(text=text, temperature=temperature, sample_index=index))
        except Exception as e:
            failures.append((index, f"{type(e).__name__}: {e}"))
        index += 1
    if not samples:
        raise AllSamplesFailed(failures)
    return SampleBatch(samples=samples, failures=failures)


class ScriptedMockBackend:
    """Deterministic backend driven by a tag-pattern script.

    `script` maps fnmatch patterns over ``"<file_id>:<unit>"`` to either a
    single response string (served for every sample) or a list indexed by
    sample index. Unmatched requests echo the prompt's buggy-code slice back,
    i.e. an identity revision; prompts without that marker get "".
    """

    def __init__(self, script: Optional[dict] = None):
        self.script = dict(script or {})

    def complete(self, request: CompletionRequest) -> str:
        key = request.tag.key()
        for pattern, value in self.script.items():
            if fnmatch.fnmatchcase(key, pattern):
                if isinstance(value, str):
                    return value
                if request.tag.sample_index < len(value):
                    return value[request.tag.sample_index]
                break
        code = extract_buggy_code(request.prompt_text)
        return code if code is not None else ""


def scripted_mock(script: Optional[dict] = None) -> ScriptedMockBackend:
    return ScriptedMockBackend(script)


def load_mock_script(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError(f"mock script is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ValidationError("mock script must be a JSON object")
    return doc


def _cache_key(prompt_text: str, temperature: float, sample_index: int) -> str:
    payload = json.dumps(
        {"prompt": prompt_text, "temperature": temperature, "sample_index": sample_index},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ReplayCacheBackend:
    """Record/replay wrapper: hits skip the inner backend entirely.

    The cache file is append-only JSON lines; concurrent writers within one
    process are serialized by a lock.
    """

    def __init__(self, inner, cache_path):
        self.inner = inner
        self.cache_path = Path(cache_path)
        self._lock = threading.Lock()
        self._entries: dict[str, str] = {}
        if self.cache_path.exists():
            self._load()

    def _load(self):
        for lineno, line in enumerate(
            self.cache_path.read_text(encoding="utf-8").splitlines(), start=1
        ):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                self._entries[record["key"]] = record["response"]
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise CacheCorrupt(f"{self.cache_path}:{lineno}: {e}") from e

    def complete(self, request: CompletionRequest) -> str:
        key = _cache_key(request.prompt_text, request.temperature, request.tag.sample_index)
        with self._lock:
            if key in self._entries:
                return self._entries[key]
        if self.inner is None:
            raise BackendError("replay cache miss and no inner backend configured")
        response = self.inner.complete(request)
        record = {
            "key": key,
            "prompt_sha256": hashlib.sha256(request.prompt_text.encode("utf-8")).hexdigest(),
            "temperature": request.temperature,
            "sample_index": request.tag.sample_index,
            "response": response,
        }
        with self._lock:
            self._entries[key] = response
            with self.cache_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        return response


def replay_cache(inner_backend, cache_path) -> ReplayCacheBackend:
    return ReplayCacheBackend(inner_backend, cache_path)


class RateLimiter:
    """Sliding-window limiter: at most `limit` acquisitions per `interval`."""

    def __init__(self, limit: float, interval: float = 1.0,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        if limit <= 0:
            raise ValidationError("rate limit must be positive")
        self.limit = int(limit)
        self.interval = interval
        self.clock = clock
        self.sleep = sleep
        self._stamps: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self.clock()
                while self._stamps and now - self._stamps[0] >= self.interval:
                    self._stamps.popleft()
                if len(self._stamps) < self.limit:
                    self._stamps.append(now)
                    return
                wait = self.interval - (now - self._stamps[0])
            # floor the wait so float residue cannot stall a coarse clock
            self.sleep(max(wait, 1e-6))


class ResilientBackend:
    """Rate-limited, retrying wrapper around any backend.

    Retryable failures are retried up to `retries` times with exponential
    backoff, so one request issues at most retries+1 attempts.
    """

    def __init__(self, inner, retries: int = 3, rate_limiter: Optional[RateLimiter] = None,
                 backoff_base: float = 0.5,
                 sleep: Callable[[float], None] = time.sleep):
        self.inner = inner
        self.retries = retries
        self.rate_limiter = rate_limiter
        self.backoff_base = backoff_base
        self.sleep = sleep

    def complete(self, request: CompletionRequest) -> str:
        last: Optional[Exception] = None
        for attempt in range(self.retries + 1):
            if self.rate_limiter is not None:
                self.rate_limiter.acquire()
            try:
                return self.inner.complete(request)
            except RetryableBackendError as e:
                last = e
                if attempt < self.retries:
                    self.sleep(self.backoff_base * (2 ** attempt))
        raise BackendError(f"request failed after {self.retries + 1} attempts: {last}")


class OpenAIChatBackend:
    """OpenAI-compatible chat-completions HTTP backend."""

    def __init__(self, base_url: str, model: str,
                 api_key_env: str = DEFAULT_API_KEY_ENV,
                 timeout: float = 120.0, session=None):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.session = session or requests.Session()

    def complete(self, request: CompletionRequest) -> str:
        headers = {}
        api_key = os.environ.get(self.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        try:
            response = self.session.post(
                f"{self.base_url}/chat/completions",
                json={
                    "model": self.model,
                    "messages": [{"role": "user", "content": request.prompt_text}],
                    "temperature": request.temperature,
                    "max_tokens": request.max_output_tokens,
                },
                headers=headers,
                timeout=self.timeout,
            )
        except (requests.Timeout, requests.ConnectionError) as e:
            raise RetryableBackendError(f"transport failure: {e}") from e
        if response.status_code in RETRYABLE_STATUSES:
            raise RetryableBackendError(f"HTTP {response.status_code}")
        if response.status_code != 200:
            raise BackendError(f"HTTP {response.status_code}: {response.text[:500]}")
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError, TypeError) as e:
            raise BackendError(f"malformed completion response: {e}") from e
