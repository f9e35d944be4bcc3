import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from core.errors import (
    AllSamplesFailed,
    BackendError,
    CacheCorrupt,
    RetryableBackendError,
    ValidationError,
)
from core.llm import (
    DEFAULT_PLAN,
    CompletionRequest,
    OpenAIChatBackend,
    RateLimiter,
    ReplayCacheBackend,
    RequestTag,
    ResilientBackend,
    SamplingPlan,
    sample,
    scripted_mock,
)


def request(prompt="p", temperature=0.0, index=0, file_id="f.py", unit="u0"):
    return CompletionRequest(
        prompt_text=prompt,
        temperature=temperature,
        max_output_tokens=64,
        tag=RequestTag(file_id=file_id, unit=unit, sample_index=index),
    )


class CountingBackend:
    def __init__(self, response="ok", fail_times=0, error=RetryableBackendError):
        self.response = response
        self.fail_times = fail_times
        self.error = error
        self.calls = []

    def complete(self, req):
        self.calls.append((req.tag, req.temperature))
        if len(self.calls) <= self.fail_times:
            raise self.error("boom")
        return self.response


class AlwaysFailing:
    def complete(self, req):
        raise BackendError("down")


def test_plan_validation():
    with pytest.raises(ValidationError):
        SamplingPlan(())
    with pytest.raises(ValidationError):
        SamplingPlan(((-1.0, 1),))
    with pytest.raises(ValidationError):
        SamplingPlan(((0.5, 0),))


def test_plan_parse():
    plan = SamplingPlan.parse("0:1,0.75:6,1.0:3")
    assert plan == DEFAULT_PLAN
    assert plan.total() == 10


def test_request_invariants():
    with pytest.raises(ValidationError):
        CompletionRequest("p", 0.0, 0, RequestTag("f", "u0", 0))
    with pytest.raises(ValidationError):
        CompletionRequest("p", -0.5, 10, RequestTag("f", "u0", 0))


def test_sample_default_plan_counts():
    backend = CountingBackend()
    batch = sample(backend, "p", DEFAULT_PLAN, file_id="f.py")
    assert len(batch.samples) == 10
    temps = [s.temperature for s in batch.samples]
    assert temps.count(0.0) == 1
    assert temps.count(0.75) == 6
    assert temps.count(1.0) == 3
    assert [s.sample_index for s in batch.samples] == list(range(10))


def test_sample_single_deterministic():
    backend = scripted_mock({"f.py:u0": ["fixed code A"]})
    batch = sample(backend, "p", SamplingPlan(((0.0, 1),)), file_id="f.py")
    assert len(batch.samples) == 1
    assert batch.samples[0].text == "fixed code A"


def test_sample_all_failed_carries_errors():
    with pytest.raises(AllSamplesFailed) as exc:
        sample(AlwaysFailing(), "p", DEFAULT_PLAN)
    assert len(exc.value.failures) == 10


def test_sample_partial_failures_continue():
    backend = CountingBackend(fail_times=3)
    batch = sample(backend, "p", DEFAULT_PLAN)
    assert len(batch.samples) == 7
    assert len(batch.failures) == 3


def test_scripted_mock_matches_tag():
    backend = scripted_mock({"f.py:u0": ["fixed code A", "fixed code B"]})
    assert backend.complete(request(index=0)) == "fixed code A"
    assert backend.complete(request(index=1)) == "fixed code B"


def test_scripted_mock_string_value_serves_all_samples():
    backend = scripted_mock({"*:u0": "same"})
    assert backend.complete(request(index=0)) == "same"
    assert backend.complete(request(index=7)) == "same"


def test_scripted_mock_identity_fallback():
    prompt = (
        "intro\n\nBuggy Code:\nx = 1\ny = 2\n\n"
        "CodeQL warning(s) for the above buggy code:\nmsg\n\nFixed Code:\n"
    )
    backend = scripted_mock({})
    assert backend.complete(request(prompt=prompt)) == "x = 1\ny = 2\n"


def test_scripted_mock_exhausted_list_falls_back_to_identity():
    prompt = (
        "intro\n\nBuggy Code:\ncode\n\n"
        "toy warning(s) for the above buggy code:\nmsg\n\nFixed Code:\n"
    )
    backend = scripted_mock({"f.py:u0": ["a", "b"]})
    assert backend.complete(request(prompt=prompt, index=2)) == "code\n"


def test_replay_cache_hit_skips_inner(tmp_path):
    cache = tmp_path / "cache.jsonl"
    inner = CountingBackend(response="live")
    backend = ReplayCacheBackend(inner, cache)
    first = [backend.complete(request(index=i)) for i in range(10)]
    assert len(inner.calls) == 10
    assert cache.read_text().count("\n") == 10

    # fresh instance over the populated cache: zero inner calls
    inner2 = CountingBackend(response="should-not-be-used")
    backend2 = ReplayCacheBackend(inner2, cache)
    second = [backend2.complete(request(index=i)) for i in range(10)]
    assert inner2.calls == []
    assert second == first


def test_replay_cache_truncated_record(tmp_path):
    cache = tmp_path / "cache.jsonl"
    cache.write_text('{"key": "abc", "response": "x"}\n{"key": "de')
    with pytest.raises(CacheCorrupt):
        ReplayCacheBackend(CountingBackend(), cache)


def test_replay_cache_key_includes_sample_index(tmp_path):
    backend = ReplayCacheBackend(CountingBackend(), tmp_path / "c.jsonl")
    backend.complete(request(index=0))
    backend.complete(request(index=1))
    assert len(backend._entries) == 2


def test_rate_limiter_sliding_window_virtual_clock():
    now = [0.0]
    sleeps = []

    def clock():
        return now[0]

    def sleep(duration):
        sleeps.append(duration)
        now[0] += duration

    limiter = RateLimiter(limit=4, interval=1.0, clock=clock, sleep=sleep)
    stamps = []
    for _ in range(12):
        limiter.acquire()
        stamps.append(now[0])
        now[0] += 0.01
    # property: no sliding 1s interval contains more than 4 acquisitions
    for i, t in enumerate(stamps):
        in_window = [s for s in stamps if t <= s < t + 1.0]
        assert len(in_window) <= 4
    assert sleeps  # limiter actually had to wait


def test_resilient_backend_retries_then_succeeds():
    sleeps = []
    inner = CountingBackend(fail_times=2)
    backend = ResilientBackend(inner, retries=3, sleep=sleeps.append)
    assert backend.complete(request()) == "ok"
    assert len(inner.calls) == 3
    assert sleeps == [0.5, 1.0]  # exponential backoff


def test_resilient_backend_attempt_budget():
    inner = CountingBackend(fail_times=99)
    backend = ResilientBackend(inner, retries=3, sleep=lambda _: None)
    with pytest.raises(BackendError):
        backend.complete(request())
    assert len(inner.calls) == 4  # retries + 1


def test_resilient_backend_does_not_retry_fatal():
    inner = CountingBackend(fail_times=99, error=BackendError)
    backend = ResilientBackend(inner, retries=3, sleep=lambda _: None)
    with pytest.raises(BackendError):
        backend.complete(request())
    assert len(inner.calls) == 1


class _FakeOpenAIHandler(BaseHTTPRequestHandler):
    fail_first = 0
    seen = []

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        type(self).seen.append((self.path, body, self.headers.get("Authorization")))
        if type(self).fail_first > 0:
            type(self).fail_first -= 1
            self.send_response(503)
            self.end_headers()
            return
        payload = json.dumps(
            {"choices": [{"message": {"content": f"echo:{body['temperature']}"}}]}
        ).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def fake_server():
    _FakeOpenAIHandler.fail_first = 0
    _FakeOpenAIHandler.seen = []
    server = HTTPServer(("127.0.0.1", 0), _FakeOpenAIHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/v1"
    server.shutdown()


def test_openai_backend_round_trip(fake_server, monkeypatch):
    monkeypatch.setenv("CORE_LLM_API_KEY", "secret-key")
    backend = OpenAIChatBackend(fake_server, "test-model")
    text = backend.complete(request(temperature=0.75))
    assert text == "echo:0.75"
    path, body, auth = _FakeOpenAIHandler.seen[0]
    assert path == "/v1/chat/completions"
    assert body["model"] == "test-model"
    assert body["messages"] == [{"role": "user", "content": "p"}]
    assert auth == "Bearer secret-key"


def test_openai_backend_retryable_status(fake_server):
    _FakeOpenAIHandler.fail_first = 2
    inner = OpenAIChatBackend(fake_server, "m")
    with pytest.raises(RetryableBackendError):
        inner.complete(request())
    backend = ResilientBackend(
        OpenAIChatBackend(fake_server, "m"), retries=3, sleep=lambda _: None
    )
    _FakeOpenAIHandler.fail_first = 2
    assert backend.complete(request()) == "echo:0.0"
