from __future__ import annotations

import base64

import pytest
import requests

from mmdit_lab.exceptions import ConfigError, TransportError
from mmdit_lab.judging import transport
from mmdit_lab.judging.transport import ChatClient, ChatRequest, ImageAttachment

REQUEST = ChatRequest("be strict", "is it red?", (ImageAttachment("Image 1", b"\x89PNG-1"),))


class FakeResponse:
    def __init__(self, status: int = 200, payload=None, headers=None):
        self.status_code = status
        self.payload = payload
        self.headers = headers or {}
        self.text = str(payload)

    def json(self):
        if self.payload is None:
            raise ValueError("no body")
        return self.payload


class FakeSession:
    def __init__(self, *responses):
        self.responses = list(responses)
        self.calls = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.calls.append({"url": url, "json": json, "headers": headers, "timeout": timeout})
        response = self.responses.pop(0)
        if isinstance(response, Exception):
            raise response
        return response


@pytest.fixture
def sleeps(monkeypatch):
    waited = []
    monkeypatch.setattr(transport.time, "sleep", waited.append)
    return waited


def client(*responses, **options) -> ChatClient:
    return ChatClient("https://judge.invalid/v1", session=FakeSession(*responses), **options)


def test_generic_body_interleaves_labels_and_images():
    c = client(FakeResponse(payload={"text": '{"pass": 1}'}), model="judge-1", api_key="k")
    assert c.complete(REQUEST) == '{"pass": 1}'
    call = c.session.calls[0]
    assert call["headers"] == {"Authorization": "Bearer k"}
    assert call["timeout"] == 60.0
    content = call["json"]["content"]
    assert content[0] == {"type": "text", "text": "Image 1"}
    assert base64.b64decode(content[1]["data"]) == b"\x89PNG-1"
    assert content[-1] == {"type": "text", "text": "is it red?"}
    assert call["json"]["system"] == "be strict"
    assert call["json"]["temperature"] == 0.0


def test_openai_body_and_reply():
    payload = {"choices": [{"message": {"content": '{"pass": 0}'}}]}
    c = client(FakeResponse(payload=payload), provider="openai")
    assert c.complete(REQUEST) == '{"pass": 0}'
    messages = c.session.calls[0]["json"]["messages"]
    assert messages[0] == {"role": "system", "content": "be strict"}
    assert messages[1]["content"][1]["image_url"]["url"].startswith("data:image/png;base64,")


def test_retryable_status_then_success(sleeps):
    c = client(FakeResponse(503), FakeResponse(payload={"text": "ok"}), backoff=0.5)
    assert c.complete(REQUEST) == "ok"
    assert sleeps == [0.5]


def test_retry_after_header_extends_the_wait(sleeps):
    c = client(FakeResponse(429, headers={"Retry-After": "3"}), FakeResponse(payload={"text": "ok"}), backoff=0.5)
    c.complete(REQUEST)
    assert sleeps == [3.0]


def test_connection_errors_are_retried(sleeps):
    c = client(requests.ConnectionError("refused"), FakeResponse(payload={"text": "ok"}))
    assert c.complete(REQUEST) == "ok"
    assert len(sleeps) == 1


def test_gives_up_after_max_attempts(sleeps):
    c = client(FakeResponse(500), FakeResponse(502), FakeResponse(504), max_attempts=3, backoff=1.0)
    with pytest.raises(TransportError, match="3 attempts"):
        c.complete(REQUEST)
    assert sleeps == [1.0, 2.0]


def test_client_errors_are_not_retried(sleeps):
    c = client(FakeResponse(401, payload={"error": "bad key"}))
    with pytest.raises(TransportError, match="HTTP 401"):
        c.complete(REQUEST)
    assert sleeps == []


def test_unexpected_reply_shape():
    with pytest.raises(TransportError):
        client(FakeResponse(payload={"choices": []})).complete(REQUEST)
    with pytest.raises(TransportError):
        client(FakeResponse(payload={"choices": []}), provider="openai").complete(REQUEST)


def test_configuration_errors(settings):
    with pytest.raises(ConfigError):
        ChatClient("")
    with pytest.raises(ConfigError):
        ChatClient("https://judge.invalid", provider="carrier-pigeon")
    settings.MMDIT_LAB = {"JUDGE_URL": "https://judge.invalid", "JUDGE_PROVIDER": "openai", "JUDGE_MAX_ATTEMPTS": 5}
    configured = ChatClient.from_settings()
    assert configured.adapter.name == "openai"
    assert configured.max_attempts == 5
