"""Uniform client for LLM completion APIs.

One Gateway wraps a provider (HTTP or in-memory mock), retries transient
failures with exponential backoff, and caches responses on disk keyed by a
content hash of the full request, so pipeline reruns never re-issue a call.
Credentials come from environment variables only.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import requests

logger = logging.getLogger(__name__)

DEFAULT_MAX_ATTEMPTS = 3
DEFAULT_BACKOFF_SECONDS = 0.25


class GatewayError(Exception):
    """Base class for completion failures."""


class AuthError(GatewayError):
    """Missing or rejected credential; never retried."""


class RateLimitedError(GatewayError):
    """Provider throttled the request; raised after retries are exhausted."""


class RefusalError(GatewayError):
    """Provider declined to answer. A first-class outcome, not a crash."""


class TransportError(GatewayError):
    """Network failure or unintelligible provider response."""


@dataclass(frozen=True)
class LlmRequest:
    model: str
    prompt: str
    temperature: float = 0.0
    top_p: float = 1.0
    max_tokens: int = 512

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not (0 < self.top_p <= 1):
            raise ValueError("top_p must be in (0, 1]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")

    def cache_key(self) -> str:
        """Stable content hash over every field."""
        blob = json.dumps(asdict(self), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class LlmResponse:
    text: str
    provider: str
    cached: bool = False


class MockProvider:
    """Offline provider with canned responses.

    Responses are looked up by exact prompt, then by sha256 of the prompt,
    then fall back to `default`. Empty canned text is treated as a refusal by
    the Gateway. Tracks total and concurrent call counts for tests.
    """

    name = "mock"

    def __init__(self, canned: Mapping[str, str] | None = None, default: str | None = None):
        self.canned = dict(canned or {})
        self.default = default
        self.calls = 0
        self.in_flight = 0
        self.max_in_flight_seen = 0
        self._lock = threading.Lock()

    def send(self, req: LlmRequest) -> str:
        with self._lock:
            self.calls += 1
            self.in_flight += 1
            self.max_in_flight_seen = max(self.max_in_flight_seen, self.in_flight)
        try:
            key = hashlib.sha256(req.prompt.encode("utf-8")).hexdigest()
            if req.prompt in self.canned:
                return self.canned[req.prompt]
            if key in self.canned:
                return self.canned[key]
            if self.default is not None:
                return self.default
            raise TransportError(f"mock provider has no canned response for request {req.cache_key()[:12]}")
        finally:
            with self._lock:
                self.in_flight -= 1

    @classmethod
    def from_file(cls, path: str | Path, default: str | None = None) -> "MockProvider":
        """Load a canned map from JSON: {prompt-or-sha256(prompt): response}."""
        return cls(json.loads(Path(path).read_text()), default=default)


class HttpProvider:
    """Minimal JSON-over-HTTP adapter.

    shape="prompt":      POST {model, prompt, temperature, top_p, max_tokens},
                         read {"text": ...}
    shape="completions": same body, read choices[0].text
    shape="chat":        POST messages=[{role: user, content: prompt}] plus
                         sampling fields, read choices[0].message.content

    The API key is read from `api_key_env` at call time and sent as a Bearer
    token; a missing key raises AuthError before any network traffic.
    """

    def __init__(
        self,
        url: str,
        shape: str = "prompt",
        api_key_env: str = "LLM_API_KEY",
        timeout: float = 60.0,
        session: requests.Session | None = None,
    ):
        if shape not in ("prompt", "completions", "chat"):
            raise ValueError(f"unknown provider shape: {shape!r}")
        self.url = url
        self.shape = shape
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.name = f"http:{shape}"
        self._session = session or requests.Session()

    def _body(self, req: LlmRequest) -> dict:
        common = {
            "model": req.model,
            "temperature": req.temperature,
            "top_p": req.top_p,
            "max_tokens": req.max_tokens,
        }
        if self.shape == "chat":
            return {**common, "messages": [{"role": "user", "content": req.prompt}]}
        return {**common, "prompt": req.prompt}

    def _extract(self, payload: dict) -> str:
        try:
            if self.shape == "prompt":
                return payload["text"]
            if self.shape == "completions":
                return payload["choices"][0]["text"]
            return payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"unexpected provider response shape: {exc}") from exc

    def send(self, req: LlmRequest) -> str:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise AuthError(f"environment variable {self.api_key_env} is not set")
        try:
            resp = self._session.post(
                self.url,
                json=self._body(req),
                headers={"Authorization": f"Bearer {key}"},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"provider rejected credential (HTTP {resp.status_code})")
        if resp.status_code == 429:
            raise RateLimitedError("provider rate limit (HTTP 429)")
        if resp.status_code >= 500:
            raise TransportError(f"provider error (HTTP {resp.status_code})")
        if resp.status_code != 200:
            raise TransportError(f"unexpected HTTP status {resp.status_code}")
        try:
            payload = resp.json()
        except ValueError as exc:
            raise TransportError(f"non-JSON provider response: {exc}") from exc
        return self._extract(payload)


class Gateway:
    """complete() with disk cache and retries; batch_complete() with a
    bounded worker pool. Safe to share across threads.

    Retries apply to RateLimited and Transport errors only (exponential
    backoff: backoff * 2**attempt). Auth errors and refusals are final.
    Whitespace-only provider text is surfaced as RefusalError; successful
    responses are cached atomically (write-temp-then-rename), one JSON file
    per content key.
    """

    def __init__(
        self,
        provider,
        cache_dir: str | Path | None = None,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
        backoff: float = DEFAULT_BACKOFF_SECONDS,
        model: str = "default-model",
        sleep: Callable[[float], None] = time.sleep,
    ):
        if max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        self.provider = provider
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.model = model
        self._sleep = sleep
        if self.cache_dir is not None:
            self.cache_dir.mkdir(parents=True, exist_ok=True)

    def _cache_path(self, req: LlmRequest) -> Path | None:
        if self.cache_dir is None:
            return None
        return self.cache_dir / f"{req.cache_key()}.json"

    def _read_cache(self, path: Path) -> LlmResponse | None:
        try:
            entry = json.loads(path.read_text())
        except (OSError, ValueError):
            return None
        return LlmResponse(text=entry["response"], provider=entry.get("provider", "?"), cached=True)

    def _write_cache(self, path: Path, req: LlmRequest, text: str) -> None:
        entry = {"request": asdict(req), "response": text, "provider": self.provider.name}
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(entry, fh, ensure_ascii=False)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def complete(self, req: LlmRequest) -> LlmResponse:
        path = self._cache_path(req)
        if path is not None and path.exists():
            hit = self._read_cache(path)
            if hit is not None:
                return hit

        attempt = 0
        while True:
            try:
                text = self.provider.send(req)
                break
            except (RateLimitedError, TransportError) as exc:
                attempt += 1
                if attempt >= self.max_attempts:
                    raise
                delay = self.backoff * (2 ** (attempt - 1))
                logger.warning("retrying after %s (attempt %d/%d, sleeping %.2fs)",
                               type(exc).__name__, attempt, self.max_attempts, delay)
                self._sleep(delay)

        if not text.strip():
            raise RefusalError("provider returned empty text (refusal)")
        if path is not None:
            self._write_cache(path, req, text)
        return LlmResponse(text=text, provider=self.provider.name, cached=False)

    def complete_text(
        self,
        prompt: str,
        temperature: float = 0.0,
        top_p: float = 1.0,
        max_tokens: int = 512,
        model: str | None = None,
    ) -> str:
        req = LlmRequest(
            model=model or self.model,
            prompt=prompt,
            temperature=temperature,
            top_p=top_p,
            max_tokens=max_tokens,
        )
        return self.complete(req).text

    def batch_complete(
        self, reqs: Sequence[LlmRequest], max_in_flight: int
    ) -> list[LlmResponse | GatewayError]:
        """Ordered results; item i is the response to request i or the
        GatewayError it failed with (never fail-fast)."""
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if not reqs:
            return []

        def one(req: LlmRequest) -> LlmResponse | GatewayError:
            try:
                return self.complete(req)
            except GatewayError as exc:
                return exc

        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            return list(pool.map(one, reqs))
