"""Round trip against a real chat-completion endpoint; skipped without a credential."""

import os

import pytest

from reasonlab.backend import LiveBackend, LiveConfig
from reasonlab.backend.prompts import execute_request
from reasonlab.cfg import build_cfg
from reasonlab.lang.parser import parse
from reasonlab.trace import parse_trace_text

HAVE_KEY = bool(os.environ.get("REASONLAB_API_KEY") or os.environ.get("OPENAI_API_KEY"))


@pytest.mark.skipif(not HAVE_KEY, reason="set REASONLAB_API_KEY to run against a live endpoint")
def test_live_trace_round_trip():
    src = "def f(x):\n    y = x + 1\n    return y\n"
    backend = LiveBackend(LiveConfig.from_env())
    reply = backend.complete(execute_request(src, "f", [1]))
    report = parse_trace_text(reply, build_cfg(parse(src), "f"), [1])
    assert report.trace is not None, reply
    assert report.trace.final_output == 2
