"""Request and reply types shared by every reasoner backend, plus call metering."""

from __future__ import annotations

import threading
from collections import Counter
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

PURPOSES = ("execute", "refine", "mutate", "cot")


class BackendError(Exception):
    """Any failure to obtain a completion."""


class TransportError(BackendError):
    """The endpoint could not be reached or kept failing after retries."""


class AuthError(BackendError):
    """The endpoint rejected the credential."""


class BackendUnavailable(BackendError):
    """A backend cannot be constructed (missing endpoint or credential)."""


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[dict[str, str], ...]
    model: str = ""
    temperature: float = 0.0
    max_tokens: int = 4096
    # Which agent role issued the call; used for accounting, not sent on the wire.
    purpose: str = "execute"

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("a chat request needs at least one message")
        object.__setattr__(self, "messages", tuple(dict(m) for m in self.messages))
        for m in self.messages:
            if set(m) != {"role", "content"}:
                raise ValueError(f"message must carry exactly role and content: {sorted(m)}")

    @property
    def user_messages(self) -> list[str]:
        return [m["content"] for m in self.messages if m["role"] == "user"]


class Reply(str):
    """Completion text that remembers whether the model hit its length limit."""

    truncated: bool

    def __new__(cls, text: str, truncated: bool = False) -> "Reply":
        obj = super().__new__(cls, text)
        obj.truncated = truncated
        return obj


@runtime_checkable
class Backend(Protocol):
    name: str

    def complete(self, request: ChatRequest) -> str: ...

    def cache_identity(self) -> str: ...


@dataclass
class Metered:
    """Counts logical calls per purpose in front of another backend.

    One instance is created per evaluated instance so counts never mix.
    """

    inner: Backend
    counts: Counter = field(default_factory=Counter)
    truncations: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def name(self) -> str:
        return self.inner.name

    def cache_identity(self) -> str:
        return self.inner.cache_identity()

    def complete(self, request: ChatRequest) -> str:
        with self._lock:
            self.counts[request.purpose] += 1
        reply = self.inner.complete(request)
        if getattr(reply, "truncated", False):
            with self._lock:
                self.truncations += 1
        return reply

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return {p: self.counts.get(p, 0) for p in PURPOSES}

