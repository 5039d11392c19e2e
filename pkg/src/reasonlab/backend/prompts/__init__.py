"""Versioned prompt templates and the request builders that fill them."""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from string import Template
from typing import Any, Optional, Sequence

from ...lang.values import parse_literal, render_value
from ..base import ChatRequest

PROMPT_VERSION = "v1"
_SPLIT = "---user---\n"

_CODE_RE = re.compile(r"```(?:python|py)?[ \t]*\n(.*?)```", re.DOTALL)
_ENTRY_RE = re.compile(r"^ENTRY:\s*([A-Za-z_][A-Za-z_0-9]*)\s*$", re.MULTILINE)
_ARGS_RE = re.compile(r"^ARGS:\s*(.*?)\s*$", re.MULTILINE)
_VARIANTS_RE = re.compile(r"^VARIANTS:\s*(\d+)\s*$", re.MULTILINE)


@lru_cache(maxsize=None)
def load_template(role: str, version: str = PROMPT_VERSION) -> tuple[Optional[Template], Template]:
    """Return (system, user) templates for an agent role."""
    text = resources.files(__name__).joinpath(version, f"{role}.txt").read_text(encoding="utf-8")
    system, _, user = text.partition(_SPLIT)
    system = system.strip()
    return (Template(system) if system else None), Template(user.rstrip("\n"))


def _messages(role: str, **fields: Any) -> list[dict[str, str]]:
    system, user = load_template(role)
    out = []
    if system is not None:
        out.append({"role": "system", "content": system.substitute(fields)})
    out.append({"role": "user", "content": user.substitute(fields)})
    return out


def render_args(args: Sequence[Any]) -> str:
    return render_value(list(args))


def execute_request(code: str, entry: str, args: Sequence[Any], model: str = "") -> ChatRequest:
    msgs = _messages("execute", code=code.rstrip("\n"), entry=entry, args=render_args(args))
    return ChatRequest(tuple(msgs), model=model, purpose="execute")


def cot_request(code: str, entry: str, args: Sequence[Any], model: str = "") -> ChatRequest:
    msgs = _messages("cot", code=code.rstrip("\n"), entry=entry, args=render_args(args))
    return ChatRequest(tuple(msgs), model=model, purpose="cot")


def mutate_request(code: str, entry: str, k: int, model: str = "") -> ChatRequest:
    msgs = _messages("mutate", code=code.rstrip("\n"), entry=entry, k=k)
    return ChatRequest(tuple(msgs), model=model, purpose="mutate", max_tokens=8192)


def refine_request(history: Sequence[dict[str, str]], feedback: str, model: str = "") -> ChatRequest:
    """Continue a tracing conversation (ending with the reasoner's trace) with feedback."""
    if not history or history[-1]["role"] != "assistant":
        raise ValueError("refinement continues a conversation that ends with the reasoner's trace")
    msgs = list(history) + _messages("refine", feedback=feedback.rstrip("\n"))
    return ChatRequest(tuple(msgs), model=model, purpose="refine")


# -- reading the fields back (used by the offline reasoner) ----------------------


@dataclass(frozen=True)
class PromptFields:
    code: str
    entry: str
    args: Optional[list[Any]]
    variants: Optional[int]


def read_fields(content: str) -> PromptFields:
    """Recover program, entry, arguments and variant count from a filled user prompt."""
    code = _CODE_RE.search(content)
    entry = _ENTRY_RE.search(content)
    if not code or not entry:
        raise ValueError("prompt carries no program or entry point")
    args_m = _ARGS_RE.search(content)
    args = parse_literal(args_m.group(1)) if args_m else None
    if args is not None and not isinstance(args, list):
        raise ValueError("ARGS must be a list literal")
    k_m = _VARIANTS_RE.search(content)
    return PromptFields(code.group(1), entry.group(1), args, int(k_m.group(1)) if k_m else None)
