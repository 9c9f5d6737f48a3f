"""Dense statevector emulator for the cQASM subset.

Amplitude index convention: bit ``k`` of the index holds qubit ``k``, so the
histogram bitstring for index ``i`` is ``format(i, f"0{n}b")`` with qubit 0 as
the rightmost character.

Sampling uses numpy's default PCG64 generator; the seed -> histogram mapping is
stable for a given numpy build.
"""

from __future__ import annotations

import cmath
import math

import numpy as np

from qistack.cqasm import MAX_QUBITS, Circuit, Gate1, Gate2, MeasureAll, Rot
from qistack.emulator import kernels
from qistack.model import Histogram


class SimulatorError(Exception):
    pass


class TooManyQubits(SimulatorError):
    pass


class NoMeasurement(SimulatorError):
    """Circuit passed to simulate() does not end in measure_all."""


_SQ = 1.0 / math.sqrt(2.0)

# Canonical 2x2 matrices as (m00, m01, m10, m11)
_GATES_1Q: dict[str, tuple[complex, complex, complex, complex]] = {
    "H": (_SQ, _SQ, _SQ, -_SQ),
    "X": (0, 1, 1, 0),
    "Y": (0, -1j, 1j, 0),
    "Z": (1, 0, 0, -1),
    "S": (1, 0, 0, 1j),
    "Sdag": (1, 0, 0, -1j),
    "T": (1, 0, 0, cmath.exp(1j * math.pi / 4)),
    "Tdag": (1, 0, 0, cmath.exp(-1j * math.pi / 4)),
}


def _rot_matrix(name: str, angle: float) -> tuple[complex, complex, complex, complex]:
    c = math.cos(angle / 2.0)
    s = math.sin(angle / 2.0)
    if name == "Rx":
        return (c, -1j * s, -1j * s, c)
    if name == "Ry":
        return (c, -s, s, c)
    # Rz = diag(e^{-i a/2}, e^{i a/2})
    return (cmath.exp(-1j * angle / 2.0), 0, 0, cmath.exp(1j * angle / 2.0))


def statevector(c: Circuit) -> np.ndarray:
    """Apply the circuit's gates to |0...0>; a trailing measure_all is ignored."""
    if c.qubits > MAX_QUBITS:
        raise TooManyQubits(f"{c.qubits} qubits exceeds the {MAX_QUBITS}-qubit cap")
    state = np.zeros(1 << c.qubits, dtype=np.complex128)
    state[0] = 1.0
    for stmt in c.statements:
        if isinstance(stmt, Gate1):
            m = _GATES_1Q[stmt.name]
            kernels.apply_gate1(state, *m, stmt.target)
        elif isinstance(stmt, Rot):
            m = _rot_matrix(stmt.name, stmt.angle)
            kernels.apply_gate1(state, *m, stmt.target)
        elif isinstance(stmt, Gate2):
            if stmt.name == "CNOT":
                kernels.apply_controlled(state, 0, 1, 1, 0, stmt.control, stmt.target)
            else:  # CZ
                kernels.apply_controlled(state, 1, 0, 0, -1, stmt.control, stmt.target)
        elif isinstance(stmt, MeasureAll):
            pass
    return state


def probabilities(c: Circuit) -> np.ndarray:
    amp = statevector(c)
    p = np.abs(amp) ** 2
    return p / p.sum()


def simulate(c: Circuit, shots: int, seed: int) -> Histogram:
    """Sample ``shots`` measurement outcomes; deterministic for a given seed."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    if not c.measures:
        raise NoMeasurement("circuit must end in measure_all")
    p = probabilities(c)
    rng = np.random.default_rng(seed)
    draws = rng.multinomial(shots, p)
    width = c.qubits
    counts = {
        format(i, f"0{width}b"): int(n) for i, n in enumerate(draws) if n > 0
    }
    return Histogram(counts=counts, shots=shots)
