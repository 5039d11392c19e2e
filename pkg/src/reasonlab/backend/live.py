"""Client for OpenAI-compatible chat-completion endpoints."""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Mapping, Optional

import httpx

from .base import AuthError, BackendError, BackendUnavailable, ChatRequest, Reply, TransportError

log = logging.getLogger(__name__)

DEFAULT_API_BASE = "https://api.openai.com/v1"
DEFAULT_MODEL = "gpt-4o-mini"
DEFAULT_PARALLELISM = 4


def _env(environ: Mapping[str, str], *names: str) -> str:
    for name in names:
        value = environ.get(name, "").strip()
        if value:
            return value
    return ""


@dataclass(frozen=True)
class LiveConfig:
    api_base: str
    api_key: str
    model: str
    parallelism: int = DEFAULT_PARALLELISM
    timeout: float = 60.0

    @classmethod
    def from_env(
        cls,
        environ: Optional[Mapping[str, str]] = None,
        *,
        api_base: Optional[str] = None,
        api_key: Optional[str] = None,
        model: Optional[str] = None,
        parallelism: Optional[int] = None,
    ) -> "LiveConfig":
        """Explicit arguments win over REASONLAB_* variables, which win over OPENAI_*."""
        env = os.environ if environ is None else environ
        base = api_base or _env(env, "REASONLAB_API_BASE", "OPENAI_API_BASE", "OPENAI_BASE_URL") or DEFAULT_API_BASE
        key = api_key or _env(env, "REASONLAB_API_KEY", "OPENAI_API_KEY")
        if not key:
            raise BackendUnavailable("live backend needs an API key (REASONLAB_API_KEY or --api-key)")
        mdl = model or _env(env, "REASONLAB_MODEL", "OPENAI_MODEL") or DEFAULT_MODEL
        par = parallelism or int(_env(env, "REASONLAB_PARALLELISM") or DEFAULT_PARALLELISM)
        return cls(base.rstrip("/"), key, mdl, max(1, par))


class LiveBackend:
    name = "live"

    def __init__(
        self,
        config: LiveConfig,
        *,
        attempts: int = 3,
        backoff: float = 1.0,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self.attempts = attempts
        self.backoff = backoff
        self._sleep = sleep
        self._gate = threading.BoundedSemaphore(config.parallelism)
        self._client = httpx.Client(timeout=config.timeout, transport=transport)

    @property
    def url(self) -> str:
        return f"{self.config.api_base}/chat/completions"

    def cache_identity(self) -> str:
        return f"{self.url}#{self.config.model}"

    def close(self) -> None:
        self._client.close()

    def complete(self, request: ChatRequest) -> str:
        body = {
            "model": request.model or self.config.model,
            "messages": list(request.messages),
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = {"Authorization": f"Bearer {self.config.api_key}"}
        last: Optional[Exception] = None
        for attempt in range(self.attempts):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            try:
                with self._gate:
                    resp = self._client.post(self.url, json=body, headers=headers)
            except httpx.HTTPError as err:
                last = err
                log.warning("attempt %d to %s failed: %s", attempt + 1, self.url, err)
                continue
            if resp.status_code in (401, 403):
                raise AuthError(f"endpoint rejected credential ({resp.status_code})")
            if resp.status_code == 429 or resp.status_code >= 500:
                last = BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                log.warning("attempt %d to %s got HTTP %d", attempt + 1, self.url, resp.status_code)
                continue
            if resp.status_code >= 400:
                raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            return self._decode(resp)
        raise TransportError(f"no completion after {self.attempts} attempts: {last}")

    @staticmethod
    def _decode(resp: httpx.Response) -> Reply:
        try:
            choice = resp.json()["choices"][0]
            text = choice["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as err:
            raise BackendError(f"malformed completion payload: {err}") from err
        truncated = choice.get("finish_reason") == "length"
        if truncated:
            log.warning("completion truncated at max_tokens")
        return Reply(text, truncated)
