"""Chat-completion transport: HTTP client, scriptable mock, response cache.

The wire shape is the common chat-completions JSON: request {model,
messages, temperature, top_p, max_tokens, n}, response {choices:
[{message: {content}}], usage}. Every pipeline test runs offline against
the mock, which replays scripted responses per request matcher.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol

log = logging.getLogger(__name__)


class TransportError(Exception):
    """Network-level failure; retryable."""


class RateLimited(TransportError):
    pass


class ProviderError(Exception):
    def __init__(self, status: int, body: str):
        super().__init__(f"provider returned {status}: {body[:200]}")
        self.status = status
        self.body = body[:2000]


class MockScriptError(Exception):
    pass


@dataclass(frozen=True)
class Message:
    role: str
    content: str


@dataclass(frozen=True)
class CompletionRequest:
    endpoint_id: str
    model_id: str
    messages: tuple[Message, ...]
    temperature: float = 0.7
    top_p: float = 1.0
    max_tokens: int = 2048
    repetition_penalty: Optional[float] = None
    n_samples: int = 1

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def canonical_json(self) -> str:
        doc = {
            "endpoint_id": self.endpoint_id,
            "model_id": self.model_id,
            "messages": [{"role": m.role, "content": m.content}
                         for m in self.messages],
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
            "repetition_penalty": self.repetition_penalty,
            "n_samples": self.n_samples,
        }
        return json.dumps(doc, sort_keys=True, ensure_ascii=False,
                          separators=(",", ":"))

    def cache_key(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


@dataclass
class CompletionResponse:
    texts: tuple[str, ...]
    usage: dict = field(default_factory=dict)
    cache_hit: bool = False


class CompletionClient(Protocol):
    def complete(self, req: CompletionRequest) -> CompletionResponse: ...


# --------------------------------------------------------------------------
# HTTP

@dataclass
class EndpointConfig:
    endpoint_id: str = "default"
    base_url: str = ""
    auth_env: str = "MATHFORGE_API_TOKEN"
    auth_header: str = "Authorization"
    auth_scheme: str = "Bearer"
    extra_headers: dict = field(default_factory=dict)
    timeout: float = 120.0
    retries: int = 3
    backoff_base: float = 1.0


class HttpChatClient:
    """POSTs the chat-completions wire shape with bounded retry/backoff.

    The auth token is read from an environment variable, never from config
    files. Retries cover transport errors, 429 and 5xx, with exponential
    backoff plus jitter."""

    def __init__(self, config: EndpointConfig, session=None,
                 rng: Optional[random.Random] = None):
        if not config.base_url:
            raise ValueError("endpoint base_url is required")
        import requests
        self.config = config
        self.session = session or requests.Session()
        self.rng = rng or random.Random()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        headers.update(self.config.extra_headers)
        token = os.environ.get(self.config.auth_env, "")
        if token:
            scheme = self.config.auth_scheme
            headers[self.config.auth_header] = f"{scheme} {token}".strip()
        return headers

    def _payload(self, req: CompletionRequest) -> dict:
        payload = {
            "model": req.model_id,
            "messages": [{"role": m.role, "content": m.content}
                         for m in req.messages],
            "temperature": req.temperature,
            "top_p": req.top_p,
            "max_tokens": req.max_tokens,
            "n": req.n_samples,
        }
        if req.repetition_penalty is not None:
            payload["repetition_penalty"] = req.repetition_penalty
        return payload

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        import requests
        attempts = self.config.retries
        last_error: Exception = TransportError("no attempt made")
        for attempt in range(attempts):
            try:
                return self._one_call(req)
            except (TransportError, requests.RequestException) as err:
                last_error = err
            if attempt < attempts - 1:
                delay = self.config.backoff_base * (2 ** attempt)
                delay += self.rng.uniform(0, delay / 2)
                log.warning("completion attempt %d failed (%s); retrying in %.1fs",
                            attempt + 1, last_error, delay)
                time.sleep(delay)
        if isinstance(last_error, TransportError):
            raise last_error
        raise TransportError(str(last_error))

    def _one_call(self, req: CompletionRequest) -> CompletionResponse:
        resp = self.session.post(self.config.base_url,
                                 json=self._payload(req),
                                 headers=self._headers(),
                                 timeout=self.config.timeout)
        if resp.status_code == 429:
            raise RateLimited("rate limited")
        if resp.status_code >= 500:
            raise TransportError(f"server error {resp.status_code}")
        if resp.status_code != 200:
            raise ProviderError(resp.status_code, resp.text)
        body = resp.json()
        texts = tuple(choice["message"]["content"]
                      for choice in body.get("choices", []))
        if len(texts) != req.n_samples:
            raise ProviderError(resp.status_code,
                                f"expected {req.n_samples} choices, got {len(texts)}")
        return CompletionResponse(texts=texts, usage=body.get("usage", {}))


# --------------------------------------------------------------------------
# mock

@dataclass
class MockRule:
    contains: Optional[str]          # substring of any message, None = default
    responses: list[str]


class MockClient:
    """Replays scripted responses; each matching request consumes the next
    n_samples texts from its rule, so runs are fully deterministic."""

    def __init__(self, rules: list[MockRule], fail_first: int = 0,
                 cycle: bool = False):
        self.rules = rules
        self.cursors = [0] * len(rules)
        self.fail_first = fail_first
        self.cycle = cycle
        self.calls = 0
        self._lock = threading.Lock()

    @staticmethod
    def from_script(doc: dict) -> "MockClient":
        rules = []
        for entry in doc.get("rules", []):
            rules.append(MockRule(entry.get("contains"),
                                  list(entry["responses"])))
        if "default" in doc:
            rules.append(MockRule(None, list(doc["default"])))
        if not rules:
            raise MockScriptError("mock script defines no responses")
        return MockClient(rules, fail_first=int(doc.get("fail_first", 0)),
                          cycle=bool(doc.get("cycle", False)))

    @staticmethod
    def from_file(path) -> "MockClient":
        with open(path, encoding="utf-8") as f:
            return MockClient.from_script(json.load(f))

    def _match(self, req: CompletionRequest) -> int:
        joined = "\n".join(m.content for m in req.messages)
        for idx, rule in enumerate(self.rules):
            if rule.contains is not None and rule.contains in joined:
                return idx
        for idx, rule in enumerate(self.rules):
            if rule.contains is None:
                return idx
        raise MockScriptError(f"no mock rule matches request: {joined[:80]!r}")

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        with self._lock:
            self.calls += 1
            if self.fail_first > 0:
                self.fail_first -= 1
                raise TransportError("scripted transport failure")
            idx = self._match(req)
            rule, cursor = self.rules[idx], self.cursors[idx]
            texts = []
            for k in range(req.n_samples):
                if cursor >= len(rule.responses):
                    if self.cycle and rule.responses:
                        cursor = 0
                    else:
                        raise MockScriptError(
                            f"mock rule {rule.contains!r} exhausted after "
                            f"{len(rule.responses)} responses")
                texts.append(rule.responses[cursor])
                cursor += 1
            self.cursors[idx] = cursor
        return CompletionResponse(texts=tuple(texts),
                                  usage={"mock_calls": self.calls})


class RetryingClient:
    """Bounded retry wrapper for clients that raise TransportError."""

    def __init__(self, inner: CompletionClient, retries: int = 3,
                 backoff_base: float = 0.0,
                 rng: Optional[random.Random] = None):
        self.inner = inner
        self.retries = retries
        self.backoff_base = backoff_base
        self.rng = rng or random.Random(0)

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        last: Exception = TransportError("no attempt made")
        for attempt in range(self.retries):
            try:
                return self.inner.complete(req)
            except TransportError as err:
                last = err
            if attempt < self.retries - 1 and self.backoff_base > 0:
                delay = self.backoff_base * (2 ** attempt)
                time.sleep(delay + self.rng.uniform(0, delay / 2))
        raise last


# --------------------------------------------------------------------------
# cache

class ResponseCache:
    """One file per request hash; writes are atomic (tmp + rename) so
    concurrent writers never expose a torn entry."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.directory / key

    def get(self, key: str) -> Optional[CompletionResponse]:
        path = self._path(key)
        try:
            with open(path, encoding="utf-8") as f:
                doc = json.load(f)
        except FileNotFoundError:
            return None
        except json.JSONDecodeError:
            log.warning("dropping unreadable cache entry %s", path)
            return None
        return CompletionResponse(texts=tuple(doc["texts"]),
                                  usage=doc.get("usage", {}), cache_hit=True)

    def put(self, key: str, response: CompletionResponse) -> None:
        doc = {"texts": list(response.texts), "usage": response.usage}
        payload = json.dumps(doc, sort_keys=True, ensure_ascii=False)
        path = self._path(key)
        with self._lock:
            tmp = path.with_name(path.name + f".tmp{os.getpid()}")
            tmp.write_text(payload, encoding="utf-8")
            os.replace(tmp, path)


class CachingClient:
    """Content-addressed cache in front of any client; identical requests
    are served byte-identically from disk."""

    def __init__(self, inner: CompletionClient, cache: ResponseCache):
        self.inner = inner
        self.cache = cache

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        key = req.cache_key()
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        response = self.inner.complete(req)
        self.cache.put(key, response)
        return response
