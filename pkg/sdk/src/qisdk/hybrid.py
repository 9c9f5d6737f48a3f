"""Authoring helper for hybrid programs speaking the stdio contract.

Contract (newline-delimited UTF-8 JSON, one object per line):

  stdin line 1:  opaque config object
  stdout line 1: {"ready": true}
  stdin line k:  {"measurements": <histogram>|null}
  stdout line k: {"circuit": "<cqasm>"} or {"done": true, "final_payload": ...}

The loop emits exactly one stdout line per stdin line.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from typing import Any, Callable, Optional, Union


@dataclass(frozen=True)
class Done:
    """Returned by a step callable to finish the loop."""

    final_payload: Any = None


Step = Callable[[Optional[dict]], Union[str, Done]]


def _emit(obj: dict) -> None:
    sys.stdout.write(json.dumps(obj, separators=(",", ":")) + "\n")
    sys.stdout.flush()


def run_hybrid_loop(step: Step, max_iterations: Optional[int] = None) -> None:
    """Drive a hybrid program: read config, signal readiness, then exchange
    one circuit (or done) line per measurements line.

    ``step`` receives the previous iteration's measurements histogram as a
    plain dict (``None`` on the first call) and returns either circuit text
    or :class:`Done`. After ``max_iterations`` circuits the loop reports done
    on the next exchange. A malformed stdin line produces a done-with-error
    line and a nonzero exit.
    """
    config_line = sys.stdin.readline()
    try:
        config = json.loads(config_line)
    except json.JSONDecodeError:
        _emit({"done": True, "error": "config line is not valid JSON"})
        sys.exit(1)
    del config  # opaque to the helper; step closures read it if they care

    _emit({"ready": True})
    emitted = 0
    for line in sys.stdin:
        try:
            message = json.loads(line)
            measurements = message["measurements"]
        except (json.JSONDecodeError, TypeError, KeyError):
            _emit({"done": True, "error": "malformed measurements line"})
            sys.exit(1)
        if max_iterations is not None and emitted >= max_iterations:
            _emit({"done": True, "final_payload": None})
            return
        try:
            reply = step(measurements)
        except Exception as exc:
            print(f"step raised: {exc!r}", file=sys.stderr, flush=True)
            sys.exit(1)
        if isinstance(reply, Done):
            _emit({"done": True, "final_payload": reply.final_payload})
            return
        _emit({"circuit": reply})
        emitted += 1
