import collections
import json
import logging

import httpx
import pytest

from irplan.backends import (ROLE_ROLLOUT, Cassette, ChatCompletionsBackend, CountingBackend,
                             GenerationRequest, Outcome, RecordingBackend, ScriptedBackend, TabularBackend,
                             fingerprint, noop_backend, oracle_backend, parse_action_object)
from irplan.backends.http import request_body
from irplan.backends.tabular import action_for, optimal_values
from irplan.domain import ResponseAction, Tactic
from irplan.errors import CassetteMiss, ConfigError, MissingField, Timeout, Transport, UnscriptedPrompt
from irplan.prompts import ACTION_GEN, ALERT_GEN, STATE_GEN, PromptContext, render_prompt
from irplan.state import RecoveryState, parse_state_text
from irplan.alerts import AlertPair, extract_alert_pairs
from irplan.parsing import payload_of

CTX = PromptContext(
    system_description="sys", logs="None", incident_description="inc", tactics=(Tactic("Impact"),),
    techniques=(), previous_state=RecoveryState.from_bits("100000"),
    previous_actions=(ResponseAction("Analyze the switch traffic"),), target_tactic=Tactic("Impact"),
)


def _req(template, ctx=CTX, seed=0, **kw):
    return GenerationRequest(render_prompt(template, ctx), seed=seed, template=template, context=ctx, **kw)


def test_scripted_lookup():
    prompt = render_prompt(STATE_GEN, CTX)
    b = ScriptedBackend.from_prompts({prompt: '{"x": 1}'})
    assert b.generate(GenerationRequest(prompt)) == '{"x": 1}'
    with pytest.raises(UnscriptedPrompt):
        b.generate(GenerationRequest("other"))


def test_scripted_list_by_sample_index():
    b = ScriptedBackend({fingerprint("p"): ["a", "b", "c"]})
    assert [b.generate(GenerationRequest("p", sample_index=i)) for i in range(4)] == ["a", "b", "c", "a"]


def test_scripted_load_formats(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"prompts": [{"prompt": "hi", "response": "yo"}]}))
    assert ScriptedBackend.load(p).generate(GenerationRequest("hi")) == "yo"
    p.write_text(json.dumps({"responses": {fingerprint("hi"): "yo2"}}))
    assert ScriptedBackend.load(p).generate(GenerationRequest("hi")) == "yo2"


def test_recording_backend_replays(tmp_path):
    inner = ScriptedBackend({fingerprint("p"): ["a", "b"], fingerprint("q"): "c"})
    rec = RecordingBackend(inner)
    for i in (0, 1):
        rec.generate(GenerationRequest("p", sample_index=i))
    rec.generate(GenerationRequest("q"))
    rec.save(tmp_path / "s.json")
    again = ScriptedBackend.load(tmp_path / "s.json")
    assert [again.generate(GenerationRequest("p", sample_index=i)) for i in (0, 1)] == ["a", "b"]
    assert again.generate(GenerationRequest("q")) == "c"


def test_parse_action_object():
    text = ('<think>hmm</think>{"Action": "Acquire full disk and memory images of REDIS01", '
            '"Explanation": "evidence"} {"Action": "second", "Explanation": "no"}')
    a = parse_action_object(text)
    assert a.action == "Acquire full disk and memory images of REDIS01"
    with pytest.raises(MissingField) as exc:
        parse_action_object('{"Action": "x"}')
    assert exc.value.name == "Explanation"


def test_tabular_deterministic_distribution():
    b = TabularBackend({("100000", "assess"): [Outcome(1.0, RecoveryState.from_bits("110000"))]})
    out = b.generate(_req(STATE_GEN))
    assert parse_state_text(out) == RecoveryState.from_bits("110000")


def test_tabular_missing_entry_self_loops():
    assert parse_state_text(TabularBackend().generate(_req(STATE_GEN))) == CTX.previous_state


def test_tabular_rejects_bad_distribution():
    with pytest.raises(ValueError):
        TabularBackend({("000000", "contain"): [Outcome(0.5, RecoveryState.initial())]})


def test_tabular_empirical_frequencies():
    a, b, c = (RecoveryState.from_bits(x) for x in ("110000", "100000", "111000"))
    dist = [Outcome(0.2, a), Outcome(0.5, b), Outcome(0.3, c)]
    backend = TabularBackend({("100000", "assess"): dist}, seed=11)
    n = 10_000
    counts = collections.Counter(parse_state_text(backend.generate(_req(STATE_GEN, seed=i))) for i in range(n))
    for o in dist:
        assert abs(counts[o.next_state] / n - o.probability) <= 0.03


def test_tabular_reproducible():
    dist = [Outcome(0.5, RecoveryState.from_bits("110000")), Outcome(0.5, RecoveryState.from_bits("100000"))]
    b1 = TabularBackend({("100000", "assess"): dist}, seed=3)
    b2 = TabularBackend({("100000", "assess"): dist}, seed=3)
    assert [b1.generate(_req(STATE_GEN, seed=i)) for i in range(50)] == \
           [b2.generate(_req(STATE_GEN, seed=i)) for i in range(50)]


def test_tabular_state_and_alerts_agree():
    hi, lo = frozenset({AlertPair("x", "1")}), frozenset({AlertPair("y", "2")})
    dist = [Outcome(0.5, RecoveryState.from_bits("110000"), hi), Outcome(0.5, RecoveryState.from_bits("100000"), lo)]
    b = TabularBackend({("100000", "assess"): dist})
    for seed in range(40):
        s = parse_state_text(b.generate(_req(STATE_GEN, seed=seed)))
        pairs = extract_alert_pairs(payload_of(b.generate(_req(ALERT_GEN, seed=seed))))
        assert pairs == (hi if s.bits == "110000" else lo)


def test_tabular_from_dict():
    b = TabularBackend.from_dict({
        "transitions": [{"state": "100000", "category": "assess",
                         "outcomes": [{"p": 1.0, "next": "110000", "alerts": [["misc", 2]]}]}],
        "proposals": {"*": [{"action": "Analyze logs", "explanation": "scope"}]},
    })
    assert parse_state_text(b.generate(_req(STATE_GEN))) == RecoveryState.from_bits("110000")
    assert parse_action_object(b.generate(_req(ACTION_GEN))).action == "Analyze logs"


def test_oracle_values(ctu):
    values, best = optimal_values(ctu)
    assert values["000000"] == 6.0
    assert best["000000"] == "contain"
    assert values["111111"] == 0.0


def test_oracle_proposals_contain_best(ctu):
    b = oracle_backend(ctu, seed=5, width=3)
    _, best = optimal_values(ctu)
    for bits, options in b.proposals.items():
        assert len(options) == 3
        assert any(a.category == best[bits] for a in options)


def test_action_for_grounds(ctu):
    for cat in ("contain", "assess", "preserve", "evict", "harden", "restore", "noop"):
        a = action_for(ctu, cat)
        from irplan.scenario import classify_text
        assert classify_text(a.action, ctu.keyword_matchers) == cat


def test_noop_backend_proposes_noop():
    text = noop_backend().generate(_req(ACTION_GEN))
    assert parse_action_object(text).action.startswith("Continue monitoring")


def test_counting_backend_roles():
    c = CountingBackend(noop_backend())
    c.generate(_req(ACTION_GEN, role=ROLE_ROLLOUT))
    c.generate(_req(ACTION_GEN, role=ROLE_ROLLOUT))
    assert c.calls == 2 and c.by_role == {ROLE_ROLLOUT: 2}


# http


def _ok(text):
    return httpx.Response(200, json={"choices": [{"message": {"content": text}}]})


def test_http_request_shape():
    seen = []

    def handler(request):
        seen.append(request)
        return _ok("hello")

    b = ChatCompletionsBackend("http://x/v1/", "m", transport=httpx.MockTransport(handler))
    req = GenerationRequest("prompt", temperature=0.6, max_tokens=512, seed=9)
    assert b.generate(req) == "hello"
    body = json.loads(seen[0].content)
    assert seen[0].url == "http://x/v1/chat/completions"
    assert body == {"model": "m", "messages": [{"role": "user", "content": "prompt"}],
                    "temperature": 0.6, "max_tokens": 512, "seed": 9}
    assert seen[0].content == request_body("m", req)


def test_http_retries_transport_errors():
    calls, sleeps = [], []

    def handler(request):
        calls.append(1)
        if len(calls) < 3:
            raise httpx.ConnectError("refused")
        return _ok("done")

    b = ChatCompletionsBackend("http://x", "m", transport=httpx.MockTransport(handler), sleep=sleeps.append)
    assert b.generate(GenerationRequest("p")) == "done"
    assert sleeps == [1.0, 2.0]


def test_http_timeout_exhausts():
    sleeps = []

    def handler(request):
        raise httpx.ReadTimeout("slow")

    b = ChatCompletionsBackend("http://x", "m", transport=httpx.MockTransport(handler), sleep=sleeps.append)
    with pytest.raises(Timeout):
        b.generate(GenerationRequest("p"))
    assert sleeps == [1.0, 2.0, 4.0]


def test_http_error_status_not_retried():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(429, text="slow down")

    b = ChatCompletionsBackend("http://x", "m", transport=httpx.MockTransport(handler), sleep=lambda s: None)
    with pytest.raises(Transport) as exc:
        b.generate(GenerationRequest("p"))
    assert exc.value.status == 429 and len(calls) == 1


def test_http_bad_envelope():
    b = ChatCompletionsBackend("http://x", "m", transport=httpx.MockTransport(lambda r: httpx.Response(200, json={})))
    with pytest.raises(Transport):
        b.generate(GenerationRequest("p"))


def test_token_sent_but_never_stored(tmp_path, monkeypatch, caplog):
    secret = "sk-test-0123456789"
    monkeypatch.setenv("IRPLAN_TEST_TOKEN", secret)
    headers = []
    attempts = []

    def handler(request):
        headers.append(request.headers.get("authorization"))
        attempts.append(1)
        if len(attempts) == 1:
            raise httpx.ConnectError("blip")
        return _ok("fine")

    cassette = Cassette(tmp_path / "c.json")
    caplog.set_level(logging.DEBUG)
    b = ChatCompletionsBackend("http://x", "m", auth_env="IRPLAN_TEST_TOKEN", cassette=cassette,
                               cassette_mode="record", transport=httpx.MockTransport(handler),
                               sleep=lambda s: None)
    b.generate(GenerationRequest("p"))
    b.close()
    assert headers[-1] == f"Bearer {secret}"
    assert secret not in (tmp_path / "c.json").read_text()
    assert secret not in caplog.text


def test_cassette_replay_and_miss(tmp_path):
    cassette = Cassette(tmp_path / "c.json")
    rec = ChatCompletionsBackend("http://x", "m", cassette=cassette, cassette_mode="record",
                                 transport=httpx.MockTransport(lambda r: _ok("recorded")))
    rec.generate(GenerationRequest("p"))
    rec.close()
    replay = ChatCompletionsBackend("http://x", "m", cassette=Cassette.load(tmp_path / "c.json"),
                                    cassette_mode="replay")
    assert replay.generate(GenerationRequest("p")) == "recorded"
    with pytest.raises(CassetteMiss):
        replay.generate(GenerationRequest("q"))


def test_cassette_modes_validated(tmp_path):
    with pytest.raises(ConfigError):
        ChatCompletionsBackend("http://x", "m", cassette_mode="replay")
    with pytest.raises(ConfigError):
        ChatCompletionsBackend("http://x", "m", cassette_mode="sideways")
    with pytest.raises(ConfigError):
        Cassette.load(tmp_path / "missing.json")
