"""On-disk, content-addressed response cache."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
from pathlib import Path
from typing import Optional

from .base import Backend, ChatRequest, Reply


def request_key(identity: str, request: ChatRequest) -> str:
    """Stable hash of endpoint identity, model, full message list and temperature."""
    payload = json.dumps(
        {
            "endpoint": identity,
            "model": request.model,
            "messages": list(request.messages),
            "temperature": request.temperature,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ResponseCache:
    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> Optional[Reply]:
        path = self._path(key)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (FileNotFoundError, json.JSONDecodeError):
            return None
        return Reply(data["response"], bool(data.get("truncated", False)))

    def put(self, key: str, reply: str) -> None:
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        body = json.dumps({"response": str(reply), "truncated": bool(getattr(reply, "truncated", False))})
        # Write-then-rename so concurrent readers never see half a file.
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(body)
        os.replace(tmp, path)


class CachingBackend:
    """Serve repeated requests from disk; only misses reach the wrapped backend."""

    def __init__(self, inner: Backend, cache: ResponseCache):
        self.inner = inner
        self.cache = cache
        self.transport_calls = 0
        self.hits = 0
        self._lock = threading.Lock()

    @property
    def name(self) -> str:
        return self.inner.name

    def cache_identity(self) -> str:
        return self.inner.cache_identity()

    def complete(self, request: ChatRequest) -> str:
        key = request_key(self.inner.cache_identity(), request)
        cached = self.cache.get(key)
        if cached is not None:
            with self._lock:
                self.hits += 1
            return cached
        reply = self.inner.complete(request)
        with self._lock:
            self.transport_calls += 1
        self.cache.put(key, reply)
        return reply
