"""Reference ping-pong hybrid program: replies with the same fixed circuit on
every step, never signalling done (the job stops via max_iterations).

Speaks the stdio contract directly so the classical runtime can host it with
``python -m qistack.programs.pingpong``; also used as the no-op program by the
latency benchmark.
"""

from __future__ import annotations

import json
import sys

CIRCUIT = "version 1.0; qubits 2; H q[0]; measure_all"


def main() -> int:
    config_line = sys.stdin.readline()
    if not config_line:
        return 1
    json.loads(config_line)
    sys.stdout.write(json.dumps({"ready": True}) + "\n")
    sys.stdout.flush()
    for line in sys.stdin:
        json.loads(line)
        sys.stdout.write(json.dumps({"circuit": CIRCUIT}) + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
