"""Reasoner backends: a live chat-completion client, a disk cache, and the offline mock."""

from .base import AuthError, Backend, BackendError, BackendUnavailable, ChatRequest, Metered, Reply, TransportError
from .cache import CachingBackend, ResponseCache, request_key
from .live import LiveBackend, LiveConfig
from .mock import FaultPlan, FaultSpec, MockBackend, seeded_fault_plan

__all__ = [
    "AuthError",
    "Backend",
    "BackendError",
    "BackendUnavailable",
    "CachingBackend",
    "ChatRequest",
    "FaultPlan",
    "FaultSpec",
    "LiveBackend",
    "LiveConfig",
    "Metered",
    "MockBackend",
    "Reply",
    "ResponseCache",
    "TransportError",
    "request_key",
    "seeded_fault_plan",
]
