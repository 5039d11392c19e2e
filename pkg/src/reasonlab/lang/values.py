"""Value model of the subject language: literal rendering, literal parsing, equality.

Values are plain Python objects: ``int``, ``float``, ``bool``, ``str``, ``None``
and ``list`` of values.  Literals use the subject language's own syntax, with
``inf``/``-inf``/``nan`` accepted for floats so traces can carry them.
"""

from __future__ import annotations

import ast as _pyast
import math
import re
from dataclasses import dataclass
from typing import Any

REL_TOL = 1e-9

INT_MIN = -(2**63)
INT_MAX = 2**63 - 1


class LiteralError(ValueError):
    """Raised when text is not a valid subject-language literal."""

    def __init__(self, message: str, pos: int = 0):
        super().__init__(f"{message} (at offset {pos})")
        self.pos = pos


@dataclass(frozen=True)
class ErrorMarker:
    """Terminal marker for an execution (real or predicted) that ended in an error."""

    kind: str
    message: str = ""

    def render(self) -> str:
        if self.message:
            return f"<error {self.kind}: {self.message}>"
        return f"<error {self.kind}>"


def kind_of(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    if isinstance(value, str):
        return "str"
    if isinstance(value, list):
        return "list"
    raise TypeError(f"not a subject value: {value!r}")


def render_value(value: Any) -> str:
    """Render a value as a literal that :func:`parse_literal` reads back."""
    if value is None:
        return "None"
    if isinstance(value, bool):
        return "True" if value else "False"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if isinstance(value, str):
        return repr(value)
    if isinstance(value, list):
        return "[" + ", ".join(render_value(v) for v in value) + "]"
    if isinstance(value, ErrorMarker):
        return value.render()
    raise TypeError(f"not a subject value: {value!r}")


_WS = re.compile(r"\s*")
_NUMBER = re.compile(r"-?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?")
_STRING = re.compile(r"'(?:[^'\\\n]|\\.)*'|\"(?:[^\"\\\n]|\\.)*\"")
_WORD = re.compile(r"-?[A-Za-z_][A-Za-z_0-9]*")

_WORDS = {
    "True": True,
    "true": True,
    "False": False,
    "false": False,
    "None": None,
    "none": None,
    "null": None,
    "inf": math.inf,
    "Infinity": math.inf,
    "-inf": -math.inf,
    "-Infinity": -math.inf,
    "nan": math.nan,
}


def parse_literal_prefix(text: str, pos: int = 0) -> tuple[Any, int]:
    """Parse one literal starting at ``pos``; return ``(value, end_offset)``."""
    pos = _WS.match(text, pos).end()
    if pos >= len(text):
        raise LiteralError("unexpected end of literal", pos)
    ch = text[pos]
    if ch == "[":
        items: list[Any] = []
        pos = _WS.match(text, pos + 1).end()
        if pos < len(text) and text[pos] == "]":
            return items, pos + 1
        while True:
            item, pos = parse_literal_prefix(text, pos)
            items.append(item)
            pos = _WS.match(text, pos).end()
            if pos >= len(text):
                raise LiteralError("unterminated list", pos)
            if text[pos] == ",":
                pos = _WS.match(text, pos + 1).end()
                # tolerate a trailing comma
                if pos < len(text) and text[pos] == "]":
                    return items, pos + 1
                continue
            if text[pos] == "]":
                return items, pos + 1
            raise LiteralError(f"expected ',' or ']' but found {text[pos]!r}", pos)
    if ch in "'\"":
        m = _STRING.match(text, pos)
        if not m:
            raise LiteralError("unterminated string", pos)
        return _pyast.literal_eval(m.group(0)), m.end()
    m = _WORD.match(text, pos)
    if m and m.group(0) in _WORDS:
        return _WORDS[m.group(0)], m.end()
    m = _NUMBER.match(text, pos)
    if m:
        tok = m.group(0)
        if any(c in tok for c in ".eE"):
            return float(tok), m.end()
        return int(tok), m.end()
    raise LiteralError(f"unexpected character {ch!r}", pos)


def parse_literal(text: str) -> Any:
    value, end = parse_literal_prefix(text, 0)
    end = _WS.match(text, end).end()
    if end != len(text):
        raise LiteralError("trailing characters after literal", end)
    return value


def _numbers_close(a: float, b: float) -> bool:
    if isinstance(a, int) and isinstance(b, int):
        return a == b
    a, b = float(a), float(b)
    if math.isnan(a) or math.isnan(b):
        return math.isnan(a) and math.isnan(b)
    return math.isclose(a, b, rel_tol=REL_TOL, abs_tol=0.0)


def outputs_equal(a: Any, b: Any) -> bool:
    """Structural equality; ints and floats compare numerically with 1e-9 relative tolerance.

    Booleans only equal booleans, and error markers never equal anything.
    """
    if isinstance(a, ErrorMarker) or isinstance(b, ErrorMarker):
        return False
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool) and a == b
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return _numbers_close(a, b)
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(outputs_equal(x, y) for x, y in zip(a, b))
    if type(a) is not type(b):
        return False
    return a == b


def states_equal(a: dict[str, Any], b: dict[str, Any]) -> bool:
    return a.keys() == b.keys() and all(outputs_equal(a[k], b[k]) for k in a)


def copy_value(value: Any) -> Any:
    if isinstance(value, list):
        return [copy_value(v) for v in value]
    return value


def copy_state(state: dict[str, Any]) -> dict[str, Any]:
    return {k: copy_value(v) for k, v in state.items()}
