"""
HTTP chat-with-images transport shared by the judge and instruction generation.

One wire shape (system text, labelled PNG attachments, question text) is mapped onto
a provider's JSON body by an adapter. ``generic`` posts::

    {"model": ..., "system": ..., "temperature": 0,
     "content": [{"type": "text", "text": "Image 1"},
                 {"type": "image", "media_type": "image/png", "data": "<base64>"},
                 ...,
                 {"type": "text", "text": "<question>"}]}

and reads ``{"text": "..."}`` back; ``openai`` speaks the chat-completions format.
"""
from __future__ import annotations

import base64
import logging
import threading
import time
from dataclasses import dataclass, field
from typing import Any

import requests

from ..conf import lab_settings
from ..exceptions import ConfigError, TransportError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ImageAttachment:
    label: str
    png: bytes = field(repr=False)

    @property
    def base64(self) -> str:
        return base64.b64encode(self.png).decode("ascii")


@dataclass(frozen=True)
class ChatRequest:
    system: str
    text: str
    images: tuple[ImageAttachment, ...] = ()
    temperature: float = 0.0


# ----------------------------
# Provider adapters
# ----------------------------

class GenericAdapter:
    name = "generic"

    def headers(self, api_key: str) -> dict[str, str]:
        return {"Authorization": f"Bearer {api_key}"} if api_key else {}

    def body(self, model: str, request: ChatRequest) -> dict[str, Any]:
        content: list[dict[str, Any]] = []
        for image in request.images:
            content.append({"type": "text", "text": image.label})
            content.append({"type": "image", "media_type": "image/png", "data": image.base64})
        content.append({"type": "text", "text": request.text})
        return {"model": model, "system": request.system, "temperature": request.temperature, "content": content}

    def reply_text(self, payload: Any) -> str:
        if isinstance(payload, dict):
            text = payload.get("text", payload.get("content"))
            if isinstance(text, str):
                return text
        raise TransportError(f"unexpected reply shape: {str(payload)[:200]}")


class OpenAIAdapter(GenericAdapter):
    name = "openai"

    def body(self, model: str, request: ChatRequest) -> dict[str, Any]:
        parts: list[dict[str, Any]] = []
        for image in request.images:
            parts.append({"type": "text", "text": image.label})
            parts.append({"type": "image_url", "image_url": {"url": f"data:image/png;base64,{image.base64}"}})
        parts.append({"type": "text", "text": request.text})
        messages = []
        if request.system:
            messages.append({"role": "system", "content": request.system})
        messages.append({"role": "user", "content": parts})
        return {"model": model, "temperature": request.temperature, "messages": messages}

    def reply_text(self, payload: Any) -> str:
        try:
            text = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"unexpected reply shape: {str(payload)[:200]}") from exc
        return text or ""


ADAPTERS = {adapter.name: adapter for adapter in (GenericAdapter(), OpenAIAdapter())}

RETRYABLE_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}


class ChatClient:
    """
    Thread-safe client; at most ``concurrency`` requests are in flight at once.

    Transport failures (connection errors, timeouts, retryable status codes) are
    retried with exponential backoff; after ``max_attempts`` a TransportError is raised.
    """

    def __init__(
        self,
        url: str,
        *,
        api_key: str = "",
        model: str = "",
        provider: str = "generic",
        timeout: float = 60.0,
        max_attempts: int = 2,
        backoff: float = 1.0,
        concurrency: int = 4,
        session: requests.Session | None = None,
    ):
        if not url:
            raise ConfigError("no judge endpoint configured (set MMDIT_LAB_JUDGE_URL)")
        if provider not in ADAPTERS:
            raise ConfigError(f"unknown judge provider {provider!r}; expected one of {sorted(ADAPTERS)}")
        self.url = url
        self.api_key = api_key
        self.model = model
        self.adapter = ADAPTERS[provider]
        self.timeout = timeout
        self.max_attempts = max(1, int(max_attempts))
        self.backoff = backoff
        self.session = session or requests.Session()
        self._slots = threading.BoundedSemaphore(max(1, int(concurrency)))

    @classmethod
    def from_settings(cls, **overrides) -> "ChatClient":
        options = {
            "api_key": lab_settings.JUDGE_API_KEY,
            "model": lab_settings.JUDGE_MODEL,
            "provider": lab_settings.JUDGE_PROVIDER,
            "timeout": lab_settings.JUDGE_TIMEOUT_SECONDS,
            "max_attempts": lab_settings.JUDGE_MAX_ATTEMPTS,
            "backoff": lab_settings.JUDGE_BACKOFF_SECONDS,
            "concurrency": lab_settings.JUDGE_CONCURRENCY,
        }
        options.update(overrides)
        return cls(lab_settings.JUDGE_URL, **options)

    def _wait(self, attempt: int, response: requests.Response | None = None) -> None:
        delay = self.backoff * (2 ** attempt)
        if response is not None:
            retry_after = response.headers.get("Retry-After")
            try:
                delay = max(delay, float(retry_after)) if retry_after else delay
            except ValueError:
                pass
        time.sleep(delay)

    def complete(self, request: ChatRequest) -> str:
        body = self.adapter.body(self.model, request)
        headers = self.adapter.headers(self.api_key)
        last_error = "no attempt made"
        with self._slots:
            for attempt in range(self.max_attempts):
                response = None
                try:
                    response = self.session.post(self.url, json=body, headers=headers, timeout=self.timeout)
                    if response.status_code in RETRYABLE_STATUS:
                        last_error = f"HTTP {response.status_code}"
                    elif response.status_code >= 400:
                        raise TransportError(f"HTTP {response.status_code}: {response.text[:200]}")
                    else:
                        return self.adapter.reply_text(response.json())
                except requests.RequestException as exc:
                    last_error = f"{type(exc).__name__}: {exc}"
                except ValueError as exc:
                    last_error = f"reply is not JSON: {exc}"
                logger.warning(
                    "chat request failed",
                    extra={"attempt": attempt + 1, "max_attempts": self.max_attempts, "error": last_error},
                )
                if attempt + 1 < self.max_attempts:
                    self._wait(attempt, response)
        raise TransportError(f"{self.url}: giving up after {self.max_attempts} attempts ({last_error})")
