import json
import random

import pytest

from mathforge.client import (
    CompletionRequest,
    EndpointConfig,
    HttpChatClient,
    Message,
    ProviderError,
    TransportError,
)


class FakeResponse:
    def __init__(self, status_code, body):
        self.status_code = status_code
        self._body = body
        self.text = json.dumps(body)

    def json(self):
        return self._body


class FakeSession:
    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.requests = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.requests.append({"url": url, "json": json, "headers": headers,
                              "timeout": timeout})
        outcome = self.outcomes.pop(0)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


def ok_body(*texts):
    return {"choices": [{"message": {"content": t}} for t in texts],
            "usage": {"prompt_tokens": 3, "completion_tokens": 7}}


def make_client(outcomes, **cfg):
    config = EndpointConfig(base_url="https://example.test/v1/chat",
                            backoff_base=0.0, **cfg)
    session = FakeSession(outcomes)
    client = HttpChatClient(config, session=session, rng=random.Random(0))
    return client, session


def req(n=1, rep=None):
    return CompletionRequest(endpoint_id="default", model_id="m-1",
                             messages=(Message("user", "hi"),),
                             temperature=0.7, top_p=0.9, max_tokens=2048,
                             repetition_penalty=rep, n_samples=n)


def test_wire_shape_and_auth_header(monkeypatch):
    monkeypatch.setenv("MATHFORGE_API_TOKEN", "sekrit")
    client, session = make_client([FakeResponse(200, ok_body("hello"))])
    response = client.complete(req(rep=1.01))
    assert response.texts == ("hello",)
    assert response.usage["completion_tokens"] == 7
    sent = session.requests[0]
    assert sent["json"] == {
        "model": "m-1",
        "messages": [{"role": "user", "content": "hi"}],
        "temperature": 0.7, "top_p": 0.9, "max_tokens": 2048,
        "n": 1, "repetition_penalty": 1.01,
    }
    assert sent["headers"]["Authorization"] == "Bearer sekrit"
    assert sent["timeout"] == 120.0


def test_repetition_penalty_omitted_when_unset(monkeypatch):
    monkeypatch.delenv("MATHFORGE_API_TOKEN", raising=False)
    client, session = make_client([FakeResponse(200, ok_body("x"))])
    client.complete(req())
    assert "repetition_penalty" not in session.requests[0]["json"]
    assert "Authorization" not in session.requests[0]["headers"]


def test_retries_on_server_errors_then_succeeds():
    client, session = make_client([
        FakeResponse(500, {}), FakeResponse(429, {}),
        FakeResponse(200, ok_body("fine"))])
    assert client.complete(req()).texts == ("fine",)
    assert len(session.requests) == 3


def test_gives_up_after_bounded_retries():
    client, _ = make_client([FakeResponse(503, {})] * 3)
    with pytest.raises(TransportError):
        client.complete(req())


def test_client_error_is_not_retried():
    client, session = make_client([FakeResponse(400, {"error": "bad"})])
    with pytest.raises(ProviderError) as err:
        client.complete(req())
    assert err.value.status == 400
    assert len(session.requests) == 1


def test_wrong_choice_count_is_a_provider_error():
    client, _ = make_client([FakeResponse(200, ok_body("only-one"))] * 3)
    with pytest.raises(ProviderError):
        client.complete(req(n=2))
