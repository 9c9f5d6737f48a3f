"""Variational example: golden-section search over a single Rx angle,
minimizing the measured probability of "1" on one qubit.

Each loop iteration submits ``Rx q[0], <angle>`` for the next probe point
and reads P("1") from the returned histogram. The analytic optimum of
P("1") = sin^2(angle/2) on [0.5, pi] is the 0.5 boundary (the objective is
symmetric about pi, so the interval stops there to keep the optimum
unique), making convergence easy to verify from the final payload.
"""

from __future__ import annotations

import math
from typing import Optional

from qisdk.hybrid import Done, run_hybrid_loop

_PHI = (math.sqrt(5) - 1) / 2  # inverse golden ratio

DEFAULT_ITERATIONS = 20
SEARCH_INTERVAL = (0.5, math.pi)


def circuit_for(angle: float) -> str:
    return f"version 1.0; qubits 1; Rx q[0], {angle!r}; measure_all"


def p_one(measurements: dict) -> float:
    counts = measurements["counts"]
    return counts.get("1", 0) / measurements["shots"]


class GoldenSectionStep:
    """Step callable holding the shrinking bracket between loop iterations."""

    def __init__(self, iterations: int = DEFAULT_ITERATIONS):
        self.iterations = iterations
        self.low, self.high = SEARCH_INTERVAL
        self.x1 = self.high - _PHI * (self.high - self.low)
        self.x2 = self.low + _PHI * (self.high - self.low)
        self.f1: Optional[float] = None
        self.f2: Optional[float] = None
        self.pending: Optional[str] = None  # which probe the last circuit measured
        self.evaluations = 0

    def _record(self, measurements: Optional[dict]) -> None:
        if measurements is None or self.pending is None:
            return
        value = p_one(measurements)
        if self.pending == "x1":
            self.f1 = value
        else:
            self.f2 = value
        self.evaluations += 1
        if self.f1 is not None and self.f2 is not None:
            if self.f1 < self.f2:
                self.high, self.x2, self.f2 = self.x2, self.x1, self.f1
                self.x1 = self.high - _PHI * (self.high - self.low)
                self.f1 = None
            else:
                self.low, self.x1, self.f1 = self.x1, self.x2, self.f2
                self.x2 = self.low + _PHI * (self.high - self.low)
                self.f2 = None

    def __call__(self, measurements: Optional[dict]):
        self._record(measurements)
        if self.evaluations >= self.iterations:
            best = (self.low + self.high) / 2
            return Done({"angle": best, "interval": [self.low, self.high],
                         "evaluations": self.evaluations})
        if self.f1 is None:
            self.pending = "x1"
            return circuit_for(self.x1)
        self.pending = "x2"
        return circuit_for(self.x2)


def main() -> None:
    run_hybrid_loop(GoldenSectionStep())


if __name__ == "__main__":
    main()
