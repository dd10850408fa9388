"""Chat client: retries, error taxonomy, post-processing, record/replay."""

import json
import random
import time

import pytest

from dialectmt.errors import (
    ApiError,
    AuthError,
    ContentFiltered,
    MalformedResponse,
    RateLimited,
    Timeout,
    TransportFailure,
)
from dialectmt.llm import (
    ChatClient,
    ModelConfig,
    RecordingTransport,
    ReplayMiss,
    ReplayTransport,
    _RetryableSendError,
    build_request,
    request_hash,
)
from dialectmt.prompt import build_zero_shot


def _cfg(**kw):
    defaults = dict(endpoint="http://test/chat", model="test-model", max_retries=2)
    defaults.update(kw)
    return ModelConfig(**defaults)


def _prompt(text="ami bhalo achi"):
    return build_zero_shot(text, "Sylhet")


def _ok(content, **extra):
    payload = {"choices": [{"message": {"content": content}, "finish_reason": "stop"}]}
    payload.update(extra)
    return (200, payload)


class ScriptedTransport:
    """Plays back a list of (status, body) or exceptions."""

    deterministic = True

    def __init__(self, script):
        self.script = list(script)
        self.sent = []

    def send(self, body):
        self.sent.append(body)
        item = self.script.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


class TestTranslate:
    def test_happy_path(self):
        client = ChatClient(_cfg(), transport=ScriptedTransport([_ok("X")]))
        result = client.translate(_prompt())
        assert result.output_text == "X"
        assert result.attempts == 1
        assert result.ok

    def test_usage_captured(self):
        client = ChatClient(_cfg(), transport=ScriptedTransport([
            _ok("X", usage={"prompt_tokens": 11, "completion_tokens": 3}),
        ]))
        assert client.translate(_prompt()).usage == (11, 3)

    def test_retry_script_500_500_200(self):
        transport = ScriptedTransport([
            (500, {"error": "boom"}),
            (500, {"error": "boom"}),
            _ok("Y"),
        ])
        client = ChatClient(_cfg(max_retries=2), transport=transport)
        result = client.translate(_prompt())
        assert result.output_text == "Y"
        assert result.attempts == 3

    def test_retries_exhausted_on_500(self):
        transport = ScriptedTransport([(500, {"error": "x"})] * 3)
        with pytest.raises(TransportFailure) as excinfo:
            ChatClient(_cfg(max_retries=2), transport=transport).translate(_prompt())
        assert excinfo.value.attempts == 3

    def test_auth_error_no_retry(self):
        transport = ScriptedTransport([(401, {"error": "denied"})])
        with pytest.raises(AuthError) as excinfo:
            ChatClient(_cfg(), transport=transport).translate(_prompt())
        assert excinfo.value.attempts == 1
        assert not transport.script  # nothing consumed beyond the first

    def test_rate_limit_exhaustion(self):
        transport = ScriptedTransport([(429, {"error": "slow down"})] * 3)
        with pytest.raises(RateLimited):
            ChatClient(_cfg(max_retries=2), transport=transport).translate(_prompt())

    def test_timeout_classified(self):
        transport = ScriptedTransport([_RetryableSendError("timeout", "t")] * 3)
        with pytest.raises(Timeout):
            ChatClient(_cfg(max_retries=2), transport=transport).translate(_prompt())

    def test_bad_request_is_api_error(self):
        transport = ScriptedTransport([(400, {"error": "bad"})])
        with pytest.raises(ApiError):
            ChatClient(_cfg(), transport=transport).translate(_prompt())

    def test_malformed_response(self):
        transport = ScriptedTransport([(200, {"nope": 1})])
        with pytest.raises(MalformedResponse):
            ChatClient(_cfg(), transport=transport).translate(_prompt())

    def test_refusal_is_content_filtered(self):
        transport = ScriptedTransport([
            (200, {"choices": [{"message": {"content": None, "refusal": "no"}}]})
        ])
        with pytest.raises(ContentFiltered):
            ChatClient(_cfg(), transport=transport).translate(_prompt())

    def test_backoff_delays_follow_schedule(self):
        sleeps = []
        transport = ScriptedTransport([(500, {}), (500, {}), _ok("Z")])
        transport.deterministic = False
        client = ChatClient(
            _cfg(max_retries=2),
            transport=transport,
            sleeper=sleeps.append,
            rng=random.Random(0),
        )
        client.translate(_prompt())
        assert len(sleeps) == 2
        assert 0.375 <= sleeps[0] <= 0.625  # 0.5 +/- 25%
        assert 0.75 <= sleeps[1] <= 1.25  # 1.0 +/- 25%

    def test_no_sleep_in_deterministic_mode(self):
        sleeps = []
        transport = ScriptedTransport([(500, {}), _ok("Z")])
        client = ChatClient(_cfg(), transport=transport, sleeper=sleeps.append)
        client.translate(_prompt())
        assert sleeps == []


class TestPostprocess:
    def _translate(self, content):
        client = ChatClient(_cfg(), transport=ScriptedTransport([_ok(content)]))
        return client.translate(_prompt()).output_text

    def test_first_nonempty_line(self):
        assert self._translate("\n\nami bala asi\nnote: extra") == "ami bala asi"

    def test_quotes_stripped(self):
        assert self._translate('"ami bala asi"') == "ami bala asi"
        assert self._translate("“ami bala asi”") == "ami bala asi"

    def test_whitespace_stripped(self):
        assert self._translate("  ami bala asi  ") == "ami bala asi"

    def test_empty_content(self):
        assert self._translate("") == ""


class TestBatch:
    def test_order_preserved_with_parallelism(self):
        class SlowTransport:
            deterministic = True

            def __init__(self):
                self.rng = random.Random(4)

            def send(self, body):
                time.sleep(self.rng.uniform(0.0, 0.02))
                content = body["messages"][0]["content"].splitlines()[-2]
                return _ok(content)

        client = ChatClient(_cfg(), transport=SlowTransport())
        prompts = [_prompt(f"bakko number {i}") for i in range(12)]
        results = client.translate_batch(prompts, parallelism=6)
        for i, result in enumerate(results):
            assert f"bakko number {i}" in result.output_text

    def test_all_fail_batch_continues(self):
        transport = ScriptedTransport([(401, {"error": "x"})] * 3)
        client = ChatClient(_cfg(), transport=transport)
        results = client.translate_batch([_prompt(f"s{i}") for i in range(3)])
        assert all(not r.ok for r in results)
        assert all("AuthError" in r.error for r in results)

    def test_parallelism_one_equals_sequential(self):
        script = [_ok(f"out{i}") for i in range(4)]
        seq = ChatClient(_cfg(), transport=ScriptedTransport(script)).translate_batch(
            [_prompt(f"s{i}") for i in range(4)], parallelism=1
        )
        assert [r.output_text for r in seq] == ["out0", "out1", "out2", "out3"]


class TestRecordReplay:
    def test_record_then_replay_round_trip(self, tmp_path):
        cfg = _cfg(api_key="secret-key")
        fixture = str(tmp_path / "fix.jsonl")
        inner = ScriptedTransport([_ok("ami bala asi"), _ok("tumi kita koro")])
        recorder = RecordingTransport(inner, fixture, cfg)
        client = ChatClient(cfg, transport=recorder)
        p1, p2 = _prompt("s one"), _prompt("s two")
        first = [client.translate(p1).output_text, client.translate(p2).output_text]

        replay_client = ChatClient(cfg, transport=ReplayTransport(fixture))
        second = [replay_client.translate(p1).output_text, replay_client.translate(p2).output_text]
        assert first == second

    def test_fixture_stores_key_hash_not_key(self, tmp_path):
        cfg = _cfg(api_key="super-secret")
        fixture = tmp_path / "fix.jsonl"
        RecordingTransport(ScriptedTransport([]), str(fixture), cfg)
        raw = fixture.read_text()
        assert "super-secret" not in raw
        assert cfg.key_hash() in raw

    def test_replay_consumes_entries_in_order(self, tmp_path):
        cfg = _cfg()
        body = build_request(_prompt("s").text, cfg)
        h = request_hash(body)
        fixture = tmp_path / "fix.jsonl"
        entries = [
            {"request_hash": h, "status": 500, "body": {"error": "x"}, "delay_ms": 0},
            {"request_hash": h, "status": 200,
             "body": {"choices": [{"message": {"content": "ok"}}]}, "delay_ms": 0},
        ]
        fixture.write_text("\n".join(json.dumps(e) for e in entries) + "\n")
        client = ChatClient(cfg, transport=ReplayTransport(str(fixture)))
        result = client.translate(_prompt("s"))
        assert result.output_text == "ok"
        assert result.attempts == 2

    def test_replay_miss_raises(self, tmp_path):
        fixture = tmp_path / "fix.jsonl"
        fixture.write_text("")
        client = ChatClient(_cfg(), transport=ReplayTransport(str(fixture)))
        with pytest.raises(ReplayMiss):
            client.translate(_prompt("unseen"))

    def test_replay_batch_byte_identical(self, tmp_path):
        cfg = _cfg()
        fixture = str(tmp_path / "fix.jsonl")
        inner = ScriptedTransport([_ok("a"), _ok("b"), _ok("c")])
        recorder = RecordingTransport(inner, fixture, cfg)
        prompts = [_prompt(f"s{i}") for i in range(3)]
        ChatClient(cfg, transport=recorder).translate_batch(prompts)

        def run():
            client = ChatClient(cfg, transport=ReplayTransport(fixture))
            results = client.translate_batch(prompts, parallelism=2)
            return json.dumps([r.output_text for r in results])

        assert run() == run()
