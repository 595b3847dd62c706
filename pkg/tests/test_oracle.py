import json
from pathlib import Path

import httpx
import pytest

from crossbench.errors import ConfigError, OracleUnavailable, PersonaGenerationError
from crossbench.oracle import (
    NEXT_PLAN_QUESTION,
    DecisionQuery,
    MockOracle,
    OracleConfig,
    RemoteOracle,
    ScriptedOracle,
    _TokenBucket,
    av_phase,
    decision_turns,
    generate_persona,
    make_policy,
    subsample_frames,
)
from crossbench.persona import reference_persona
from crossbench.scenario import Condition, enumerate_conditions
from crossbench.simulator import SimState, apply_action, parse_decision_reply

KEY_ENV = "CROSSBENCH_TEST_KEY"


def remote_config(**kw):
    base = dict(backend="remote", endpoint="https://example.invalid/v1/chat", model="m",
                api_key_env=KEY_ENV, retry_limit=2, retry_backoff=0.0)
    base.update(kw)
    return OracleConfig(**base)


def query(persona, frames, history=(), cond=Condition("none", "stop"), position=0, t=0):
    return DecisionQuery(persona, tuple(frames), "*-o-o-o-o-|ROAD", history, cond, position, t)


@pytest.fixture
def frames(tmp_path):
    out = []
    for i in range(30):
        p = tmp_path / f"{i:03d}.jpg"
        p.write_bytes(b"\xff\xd8" + bytes([i]) + b"\xff\xd9")
        out.append(p)
    return out


@pytest.mark.parametrize("cond", enumerate_conditions())
@pytest.mark.parametrize("t", range(9))
def test_assertive_always_forward(cond, t):
    reply = make_policy("assertive").reply(cond, min(t, 4), t)
    assert parse_decision_reply(reply)[0] == "forward"


@pytest.mark.parametrize("ehmi", ["light_strip", "eyes", "none"])
@pytest.mark.parametrize("t", [3, 4, 5])
def test_cautious_stops_when_car_approaches_without_yielding(ehmi, t):
    assert av_phase(t, "pass") == "approaching"
    for pos in range(5):
        reply = make_policy("cautious").reply(Condition(ehmi, "pass"), pos, t)
        assert parse_decision_reply(reply)[0] == "stop"


def test_mock_is_pure(persona, frames):
    oracle = MockOracle(seed=7)
    q = query(persona, frames[:3], cond=Condition("eyes", "stop"), position=2, t=6)
    assert oracle.decide(q) == MockOracle(seed=7).decide(q)


def test_profiled_policy_depends_on_persona():
    ids = {make_policy("profiled", reference_persona(k)).policy_id
           for k in ("test03", "test12", "test14", "test15", "test16")}
    assert len(ids) > 1


def test_unknown_policy():
    with pytest.raises(ConfigError, match="unknown mock policy"):
        make_policy("reckless")


def test_decide_needs_frames(persona):
    with pytest.raises(ValueError):
        MockOracle().decide(query(persona, []))


def test_mock_generates_test12():
    assert generate_persona(MockOracle(), "prompt") == reference_persona("test12")


def test_generate_persona_corrective_requery():
    good = reference_persona("test03")
    oracle = ScriptedOracle([], persona_replies=[json.dumps({"description": "x"}), good.to_json()])
    assert generate_persona(oracle, "craft") == good
    assert "could not be used" in oracle.calls[1] and "'name'" in oracle.calls[1]


def test_generate_persona_gives_up_after_one_retry():
    oracle = ScriptedOracle([], persona_replies=["nope", "still nope"])
    with pytest.raises(PersonaGenerationError):
        generate_persona(oracle, "craft")


@pytest.mark.parametrize("n,cap", [(24, 24), (30, 24), (30, 5), (7, 1), (2, 2)])
def test_subsample_keeps_ends_and_order(n, cap):
    src = [Path(f"{i:03d}.jpg") for i in range(n)]
    out = subsample_frames(src, cap)
    assert len(out) == min(n, cap)
    assert out[0] == src[0]
    if cap > 1:
        assert out[-1] == src[-1]
    assert list(out) == sorted(out)


def test_missing_credential_is_config_error(monkeypatch):
    monkeypatch.delenv(KEY_ENV, raising=False)
    calls = []
    client = httpx.Client(transport=httpx.MockTransport(lambda r: calls.append(r)))
    with pytest.raises(ConfigError, match=KEY_ENV):
        RemoteOracle(remote_config(), client=client)
    assert calls == []


def test_remote_request_shape(monkeypatch, persona, frames):
    monkeypatch.setenv(KEY_ENV, "secret")
    seen = []

    def handler(request):
        seen.append(json.loads(request.content))
        assert request.headers["authorization"] == "Bearer secret"
        return httpx.Response(200, json={"choices": [{"message": {"content": "Decision: stop\nReason: r\nConfidence: 3/5\nTrust: 3/5"}}]})

    transcript = []
    oracle = RemoteOracle(remote_config(max_frames=4, temperature=0.3),
                          client=httpx.Client(transport=httpx.MockTransport(handler)), transcript=transcript.append)
    state = apply_action(SimState(), "forward", reason="walk", confidence=4, trust=3)
    reply = oracle.decide(query(persona, frames, state.history, position=1, t=1))
    assert parse_decision_reply(reply)[0] == "stop"
    body = seen[0]
    assert body["model"] == "m" and body["temperature"] == 0.3
    msgs = body["messages"]
    assert msgs[0]["role"] == "system" and persona.name in msgs[0]["content"]
    assert [m["role"] for m in msgs[1:]] == ["user", "assistant", "user"]
    last = msgs[-1]["content"]
    assert NEXT_PLAN_QUESTION in last[0]["text"]
    assert sum(p["type"] == "image_url" for p in last) == 4
    assert "secret" not in json.dumps(transcript)
    assert transcript[0]["request"][-1]["content"][1]["image_url"] == "<omitted>"


def test_history_window(persona, frames):
    state = SimState()
    for _ in range(4):
        state = apply_action(state, "stop")
    full = decision_turns(query(persona, frames, state.history, t=4), 24)
    windowed = decision_turns(query(persona, frames, state.history, t=4), 24, window=1)
    assert len(full) == 1 + 2 * 4 + 1
    assert len(windowed) == 1 + 2 + 1


def test_transport_errors_retry_then_unavailable(monkeypatch, persona, frames):
    monkeypatch.setenv(KEY_ENV, "k")
    attempts = []

    def handler(request):
        attempts.append(1)
        return httpx.Response(503, text="busy")

    sleeps = []
    oracle = RemoteOracle(remote_config(retry_limit=2, retry_backoff=0.5),
                          client=httpx.Client(transport=httpx.MockTransport(handler)), sleep=sleeps.append)
    with pytest.raises(OracleUnavailable, match="503"):
        oracle.decide(query(persona, frames))
    assert len(attempts) == 3 and sleeps == [0.5, 1.0]


def test_transient_failure_recovers(monkeypatch, persona, frames):
    monkeypatch.setenv(KEY_ENV, "k")
    replies = iter([httpx.Response(500), httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})])
    oracle = RemoteOracle(remote_config(), client=httpx.Client(transport=httpx.MockTransport(lambda r: next(replies))),
                          sleep=lambda s: None)
    assert oracle.generate_persona("p") == "ok"


def test_connection_error_is_retryable(monkeypatch, persona, frames):
    monkeypatch.setenv(KEY_ENV, "k")

    def handler(request):
        raise httpx.ConnectError("refused", request=request)

    oracle = RemoteOracle(remote_config(retry_limit=1), client=httpx.Client(transport=httpx.MockTransport(handler)),
                          sleep=lambda s: None)
    with pytest.raises(OracleUnavailable, match="ConnectError"):
        oracle.generate_persona("p")


def test_token_bucket_paces_calls():
    now = [0.0]
    waits = []

    def sleep(s):
        waits.append(s)
        now[0] += s

    bucket = _TokenBucket(rate=2.0, burst=1.0, clock=lambda: now[0], sleep=sleep)
    for _ in range(3):
        bucket.acquire()
    assert waits == pytest.approx([0.5, 0.5])


def test_config_validation():
    with pytest.raises(ConfigError):
        OracleConfig(backend="cloud")
    with pytest.raises(ConfigError):
        OracleConfig(temperature=-1)
    with pytest.raises(ConfigError):
        OracleConfig(max_frames=0)
