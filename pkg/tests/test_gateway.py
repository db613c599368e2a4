import threading
from concurrent.futures import ThreadPoolExecutor

import pytest

from exactlen.errors import ConfigError
from exactlen.gateway import (
    CATEGORY_TEMPERATURES,
    AuthError,
    BackendCaps,
    BackendError,
    DecodingParams,
    HttpChatBackend,
    OverCapError,
    RateLimitError,
    RetryPolicy,
    ScriptedMock,
    TokenBucket,
    caps_for_model,
    complete,
)
from exactlen.prompting import render
from exactlen.stub_server import StubServer
from exactlen.tokenizer import LengthTarget


def no_sleep():
    slept = []
    return RetryPolicy(max_attempts=4, sleep=slept.append), slept


@pytest.fixture
def stub():
    with StubServer(mode="echo") as server:
        yield server


def test_echo_round_trip(stub):
    backend = HttpChatBackend("stub", stub.url)
    out = complete(backend, "ping pong")
    assert out.text == "ping pong"
    assert out.finish_reason == "stop" and not out.truncated and out.attempts == 1
    body = stub.state.requests[0]["body"]
    assert body["messages"] == [{"role": "user", "content": "ping pong"}]
    assert body["top_p"] == 0.95 and "max_tokens" in body


def test_rendered_prompt_and_system_message(stub):
    backend = HttpChatBackend("stub", stub.url, system_prompt="Be brief.", max_tokens_field="max_completion_tokens")
    prompt = render("Say hi.", LengthTarget(3), "baseline")
    assert backend.complete(prompt).text == prompt.full_text
    body = stub.state.requests[0]["body"]
    assert body["messages"][0] == {"role": "system", "content": "Be brief."}
    assert "max_completion_tokens" in body


def test_key_read_from_env_at_call_time(stub, monkeypatch):
    backend = HttpChatBackend("stub", stub.url, secret_env="EXACTLEN_TEST_KEY")
    monkeypatch.delenv("EXACTLEN_TEST_KEY", raising=False)
    with pytest.raises(AuthError):
        backend.complete("x")
    monkeypatch.setenv("EXACTLEN_TEST_KEY", "sk-test")
    backend.complete("x")
    assert stub.state.requests[-1]["auth"] == "Bearer sk-test"
    assert "sk-test" not in repr(vars(backend))


def test_retries_server_errors(stub):
    retry, slept = no_sleep()
    stub.state.failures = [500, 503]
    out = HttpChatBackend("stub", stub.url, retry=retry).complete("hello")
    assert out.text == "hello" and out.attempts == 3
    assert slept == [1.0, 2.0]


def test_rate_limit_exhaustion(stub):
    retry, _ = no_sleep()
    stub.state.failures = [429] * 10
    with pytest.raises(RateLimitError):
        HttpChatBackend("stub", stub.url, retry=retry).complete("hello")
    assert len(stub.state.requests) == 4


def test_auth_and_client_errors_not_retried(stub):
    retry, _ = no_sleep()
    stub.state.failures = [401]
    with pytest.raises(AuthError):
        HttpChatBackend("stub", stub.url, retry=retry).complete("x")
    stub.state.failures = [400]
    with pytest.raises(BackendError):
        HttpChatBackend("stub", stub.url, retry=retry).complete("x")
    assert len(stub.state.requests) == 2


def test_backoff_schedule():
    policy = RetryPolicy(base_delay=1, multiplier=2, max_delay=5)
    assert [policy.delay(a) for a in range(1, 6)] == [1, 2, 4, 5, 5]
    assert policy.delay(1, retry_after=3) == 3


def test_over_cap_rejected_before_any_call(stub):
    backend = HttpChatBackend("stub", stub.url, caps=BackendCaps(max_completion_tokens=100))
    with pytest.raises(OverCapError):
        backend.complete("x", DecodingParams(max_completion_tokens=101))
    with pytest.raises(OverCapError):
        backend.complete("x", DecodingParams(max_completion_tokens=50, temperature=3.0))
    assert stub.state.requests == []


def test_concurrency_bound_against_stub():
    with StubServer(mode="echo", delay_s=0.05) as server:
        backend = HttpChatBackend("stub", server.url, max_concurrency=3)
        with ThreadPoolExecutor(12) as pool:
            list(pool.map(lambda i: backend.complete(f"m{i}"), range(24)))
        assert server.state.peak_in_flight <= 3
        assert server.state.peak_in_flight >= 2


def test_scripted_mock_bound_and_determinism():
    mock = ScriptedMock("m", lambda p, i: f"reply {i}", max_concurrency=2)
    mock.delay_s = 0.02
    with ThreadPoolExecutor(8) as pool:
        list(pool.map(lambda i: mock.complete("x"), range(16)))
    assert mock.peak_in_flight <= 2 and mock.calls == 16
    a = ScriptedMock("a", ["x", "y"])
    assert [a.complete("p").text for _ in range(3)] == ["x", "y", "x"]


def test_truncation_is_flagged():
    mock = ScriptedMock("m", ["word " * 100])
    out = mock.complete("x", DecodingParams(max_completion_tokens=10))
    assert out.truncated and out.finish_reason == "length"
    assert len(out.text) == 40
    full = mock.complete("x", DecodingParams(max_completion_tokens=1000))
    assert not full.truncated


def test_empty_script_rejected():
    with pytest.raises(ConfigError):
        ScriptedMock("m", [])


def test_token_bucket_waits():
    now = [0.0]
    sleeps = []

    def sleep(d):
        sleeps.append(d)
        now[0] += d

    bucket = TokenBucket(2.0, capacity=1, clock=lambda: now[0], sleep=sleep)
    for _ in range(3):
        bucket.acquire()
    assert sleeps == [pytest.approx(0.5), pytest.approx(0.5)]


def test_category_temperatures():
    assert CATEGORY_TEMPERATURES == {
        "writing": 0.7, "roleplay": 0.7, "stem": 0.1, "humanities": 0.1,
        "extraction": 0.0, "math": 0.0, "coding": 0.0, "reasoning": 0.0,
    }


def test_model_caps():
    assert caps_for_model("gpt-4o").max_completion_tokens == 16384
    assert caps_for_model("gpt-4o-mini-2024").max_completion_tokens == 16384
    assert caps_for_model("o4-mini").max_completion_tokens == 32768
    assert caps_for_model("deepseek-v3").max_completion_tokens == 8192
    assert caps_for_model("unknown-model").max_completion_tokens == BackendCaps().max_completion_tokens


def test_decoding_params_validation():
    with pytest.raises(ValueError):
        DecodingParams(top_p=0)
    with pytest.raises(ValueError):
        DecodingParams(temperature=-1)
