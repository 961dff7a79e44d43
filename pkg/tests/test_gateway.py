import json
import threading
import time

import httpx
import numpy as np
import pytest

from emosynth.errors import GatewayError, InvalidArgument, ProtocolError
from emosynth.gateway import (
    ChatReply,
    ChatRequest,
    Gateway,
    GenerationParams,
    HttpBackend,
    MockBackend,
    TransientError,
)
from emosynth.pipeline import Stages, fixtures


def test_generation_defaults():
    caps = {s: GenerationParams(s).max_new_tokens for s in
            ("actors", "utterances", "soft_labels", "context", "cleaning", "rewriting")}
    assert caps == {"actors": 300, "utterances": 500, "soft_labels": 100,
                    "context": 300, "cleaning": 300, "rewriting": 300}
    assert GenerationParams("actors").repetition_penalty == 1.03
    with pytest.raises(InvalidArgument):
        GenerationParams("summary")
    with pytest.raises(InvalidArgument):
        GenerationParams("actors", repetition_penalty=0)


def test_single_user_turn():
    p = GenerationParams("actors")
    with pytest.raises(InvalidArgument):
        ChatRequest(({"role": "user", "content": "a"}, {"role": "user", "content": "b"}), p)
    with pytest.raises(InvalidArgument):
        ChatRequest(({"role": "system", "content": "a"},), p)


def test_mock_actor_fixture(mock_gateway, blade_runner):
    stage = Stages().actors(blade_runner)
    reply = mock_gateway.complete(ChatRequest.single(stage.prompt, GenerationParams("actors")))
    assert reply.text.startswith("1. Rick Deckard")
    again = mock_gateway.complete(ChatRequest.single(stage.prompt, GenerationParams("actors")))
    assert again.text == reply.text


def test_unreachable_endpoint_attempts():
    gw = Gateway(HttpBackend("http://127.0.0.1:1"), retries=2, backoff=0, timeout=2)
    req = ChatRequest.single("hello", GenerationParams("actors"))
    with pytest.raises(GatewayError) as err:
        gw.complete(req)
    assert err.value.attempts == 3
    assert gw.calls == 3


def _http(handler, **kw):
    return HttpBackend("http://llm.test", client=httpx.Client(transport=httpx.MockTransport(handler)), **kw)


def test_http_wire_shape(monkeypatch):
    seen = {}

    def handler(request):
        seen["path"] = request.url.path
        seen["auth"] = request.headers.get("authorization")
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json={"choices": [{"message": {"content": "1. Ann"}}], "usage": {"total_tokens": 3}})

    monkeypatch.setenv("EMOSYNTH_API_TOKEN", "s3cret")
    backend = _http(handler, supports_repetition_penalty=True)
    reply = Gateway(backend, retries=0).complete(ChatRequest.single("hi", GenerationParams("soft_labels")))
    assert reply.text == "1. Ann" and reply.usage == {"total_tokens": 3}
    assert seen["path"] == "/v1/chat/completions"
    assert seen["auth"] == "Bearer s3cret"
    body = seen["body"]
    assert body["temperature"] == 0 and body["max_tokens"] == 100
    assert body["repetition_penalty"] == 1.03
    assert body["messages"] == [{"role": "user", "content": "hi"}]


def test_http_penalty_omitted_with_warning(caplog):
    backend = _http(lambda r: httpx.Response(200, json={"choices": [{"message": {"content": "x"}}]}))
    body = backend.chat_body(ChatRequest.single("hi", GenerationParams("actors")))
    assert "repetition_penalty" not in body
    assert "repetition_penalty" in caplog.text


def test_http_malformed_reply():
    backend = _http(lambda r: httpx.Response(200, json={"nope": 1}))
    with pytest.raises(ProtocolError) as err:
        Gateway(backend, retries=3, backoff=0).complete(ChatRequest.single("hi", GenerationParams("actors")))
    assert err.value.payload == {"nope": 1}


def test_http_5xx_retried_then_succeeds():
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) < 3:
            return httpx.Response(503)
        return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

    gw = Gateway(_http(handler), retries=3, backoff=0)
    assert gw.complete(ChatRequest.single("hi", GenerationParams("actors"))).text == "ok"
    assert len(calls) == 3


def test_http_embeddings_order():
    def handler(request):
        return httpx.Response(200, json={"data": [{"index": 1, "embedding": [0, 2]}, {"index": 0, "embedding": [3, 4]}]})

    out = Gateway(_http(handler)).embed(["a", "b"])
    assert np.allclose(out, [[0.6, 0.8], [0.0, 1.0]])


class _Raggedy:
    def embed(self, texts, timeout):
        return [[1.0] * (i + 1) for i, _ in enumerate(texts)]


def test_embed_dimension_mismatch():
    with pytest.raises(ProtocolError):
        Gateway(_Raggedy()).embed(["a", "b"])


def test_embed_contract():
    gw = Gateway(MockBackend())
    vecs = gw.embed(["a", "b", "a"])
    assert vecs.shape[0] == 3
    assert np.allclose(np.linalg.norm(vecs, axis=1), 1.0, atol=1e-6)
    assert np.array_equal(vecs[0], vecs[2])
    assert float(vecs[0] @ vecs[2]) == pytest.approx(1.0)
    assert not np.array_equal(vecs[0], vecs[1])
    assert np.array_equal(gw.embed(["a"])[0], vecs[0])
    with pytest.raises(InvalidArgument):
        gw.embed(["ok", "  "])


class _Slow:
    def __init__(self):
        self.lock = threading.Lock()
        self.active = 0
        self.peak = 0

    def chat(self, request, timeout):
        with self.lock:
            self.active += 1
            self.peak = max(self.peak, self.active)
        time.sleep(0.01)
        with self.lock:
            self.active -= 1
        return ChatReply("x")


def test_concurrency_bound():
    backend = _Slow()
    gw = Gateway(backend, concurrency=3)
    samples = []
    req = ChatRequest.single("p", GenerationParams("actors"))

    def work():
        for _ in range(5):
            gw.complete(req)
            samples.append(gw.in_flight)

    threads = [threading.Thread(target=work) for _ in range(10)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert gw.max_in_flight <= 3 and backend.peak <= 3
    assert max(samples) <= 3
    assert gw.in_flight == 0 and gw.calls == 50


class _Flaky:
    def __init__(self, failures):
        self.failures = failures

    def chat(self, request, timeout):
        if self.failures:
            self.failures -= 1
            raise TransientError("boom")
        return ChatReply("fine")


def test_backoff_schedule(monkeypatch):
    sleeps = []
    monkeypatch.setattr("emosynth.gateway.time.sleep", sleeps.append)
    gw = Gateway(_Flaky(3), retries=3, backoff=0.5)
    assert gw.complete(ChatRequest.single("p", GenerationParams("actors"))).text == "fine"
    assert sleeps == [0.5, 1.0, 2.0]


def test_mock_pure_function(tmp_path):
    fx = fixtures.write_fixtures(tmp_path / "fx")
    req = ChatRequest.single("an unmatched prompt\nActor: Ann", GenerationParams("utterances"))
    a = MockBackend(fx).chat(req, 1).text
    b = MockBackend(fixtures.bundled_dir()).chat(req, 1).text
    assert a == b and a.count('"') >= 20
