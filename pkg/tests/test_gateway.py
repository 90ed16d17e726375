import json

import pytest

from patvar.gateway import (
    BackendError,
    ChatMessage,
    CompletionRequest,
    CompletionResponse,
    GatewayTimeout,
    MockBackend,
    TransientBackendError,
    cache_key,
    cached_complete,
    complete,
)


def req(content="hello there", **kw):
    kw.setdefault("model", "test-model")
    kw.setdefault("max_tokens", 64)
    return CompletionRequest(messages=(ChatMessage("user", content),), **kw)


def test_message_validation():
    with pytest.raises(ValueError):
        ChatMessage("oracle", "x")
    with pytest.raises(ValueError):
        ChatMessage("user", "")
    with pytest.raises(ValueError):
        req(max_tokens=0)
    with pytest.raises(ValueError):
        req(temperature=-1.0)


def test_cache_key_sensitivity():
    base = req()
    assert cache_key(base) == cache_key(req())
    assert cache_key(base) != cache_key(req(temperature=0.5))
    assert cache_key(base) != cache_key(req(max_tokens=65))
    assert cache_key(base) != cache_key(req(model="other", max_tokens=64))
    assert cache_key(base) != cache_key(req("hello  there"))


def test_mock_table_response():
    backend = MockBackend(template_mode=False)
    r = req("ping")
    backend.add_response(r.messages, "canned")
    resp = complete(r, backend)
    assert resp == CompletionResponse("canned", "stop", from_cache=False)
    assert backend.calls == 1


def test_mock_without_entry_errors():
    backend = MockBackend(template_mode=False)
    with pytest.raises(BackendError):
        complete(req("unknown"), backend)


def test_transient_errors_retry_then_timeout():
    class Flaky:
        def __init__(self, failures):
            self.failures = failures
            self.calls = 0

        def send(self, r):
            self.calls += 1
            if self.calls <= self.failures:
                raise TransientBackendError(503, "unavailable")
            return CompletionResponse("late but fine")

    flaky = Flaky(failures=2)
    assert complete(req(), flaky, retries=3, backoff=0).text == "late but fine"
    assert flaky.calls == 3

    dead = Flaky(failures=99)
    with pytest.raises(GatewayTimeout):
        complete(req(), dead, retries=3, backoff=0)
    assert dead.calls == 4  # initial call plus three retries


def test_client_errors_never_retry():
    class Rejecting:
        def __init__(self):
            self.calls = 0

        def send(self, r):
            self.calls += 1
            raise BackendError(401, "unauthorized")

    backend = Rejecting()
    with pytest.raises(BackendError):
        complete(req(), backend, retries=3, backoff=0)
    assert backend.calls == 1


def test_cached_complete_hit_and_miss(tmp_path):
    backend = MockBackend(template_mode=False)
    r = req("cache me")
    backend.add_response(r.messages, "value")
    first = cached_complete(r, backend, tmp_path)
    assert (first.text, first.from_cache) == ("value", False)
    second = cached_complete(r, backend, tmp_path)
    assert (second.text, second.from_cache) == ("value", True)
    assert backend.calls == 1

    other = req("cache me", temperature=0.7)
    backend.add_response(other.messages, "value")
    third = cached_complete(other, backend, tmp_path)
    assert third.from_cache is False
    assert backend.calls == 2


def test_cache_transparency(tmp_path):
    backend = MockBackend(template_mode=False)
    r = req("transparent")
    backend.add_response(r.messages, "same answer")
    direct = complete(r, backend)
    cached_miss = cached_complete(r, backend, tmp_path)
    cached_hit = cached_complete(r, backend, tmp_path)
    assert direct.text == cached_miss.text == cached_hit.text
    assert direct.finish_reason == cached_hit.finish_reason


def test_corrupted_cache_entry_is_overwritten(tmp_path, caplog):
    backend = MockBackend(template_mode=False)
    r = req("fragile")
    backend.add_response(r.messages, "good")
    cached_complete(r, backend, tmp_path)
    path = tmp_path / (cache_key(r) + ".json")
    path.write_text("{not json", encoding="utf-8")
    with caplog.at_level("WARNING"):
        resp = cached_complete(r, backend, tmp_path)
    assert resp.text == "good"
    assert resp.from_cache is False
    assert json.loads(path.read_text(encoding="utf-8"))["response"]["text"] == "good"
    assert any("corrupted" in rec.message for rec in caplog.records)


def test_cache_keys_stable_across_runs(tmp_path):
    # Key depends only on request content, not process state.
    assert cache_key(req("stable")) == "{}".format(cache_key(req("stable")))
    entry_names = set()
    backend = MockBackend(template_mode=False)
    r = req("stable")
    backend.add_response(r.messages, "x")
    cached_complete(r, backend, tmp_path)
    entry_names = {p.name for p in tmp_path.iterdir()}
    assert entry_names == {cache_key(r) + ".json"}


def test_error_responses_not_cached(tmp_path):
    class Erroring:
        def send(self, r):
            return CompletionResponse("", "error")

    resp = cached_complete(req("boom"), Erroring(), tmp_path)
    assert resp.finish_reason == "error"
    assert list(tmp_path.iterdir()) == []


def test_mock_template_discriminator():
    backend = MockBackend(label_vocab={"price": ["cheap", "deal"], "service": ["staff"]})
    messages = (
        ChatMessage("system", "The assistant labels the text with exactly one label from the list."),
        ChatMessage("user", "text: what a cheap deal today\nlabels: service, price\nanswer with one label only"),
    )
    resp = backend.send(CompletionRequest("m", messages, 0.0, 16))
    assert resp.text == "price"
