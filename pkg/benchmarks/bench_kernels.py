#!/usr/bin/env python3
"""Compare the compiled gate kernels against the pure-numpy fallback.

Applies a fixed random circuit layer-by-layer to statevectors of growing
size and reports per-gate-application timings for both backends.

Usage: python3 benchmarks/bench_kernels.py [--qubits 8 12 16] [--repeats 5]
"""

from __future__ import annotations

import argparse
import cmath
import math
import random
import time

import numpy as np

from qistack.emulator import _kernels_py

try:
    from qistack.emulator import _kernels_cy
except ImportError:
    _kernels_cy = None

_SQ = 1 / math.sqrt(2)
H = (_SQ, _SQ, _SQ, -_SQ)


def random_ops(qubits: int, count: int, seed: int = 7):
    rng = random.Random(seed)
    ops = []
    for _ in range(count):
        if rng.random() < 0.7:
            angle = rng.uniform(0, math.tau)
            matrix = (
                cmath.exp(-1j * angle / 2), 0, 0, cmath.exp(1j * angle / 2)
            ) if rng.random() < 0.5 else H
            ops.append(("1q", matrix, rng.randrange(qubits)))
        else:
            control = rng.randrange(qubits)
            target = rng.choice([q for q in range(qubits) if q != control])
            ops.append(("cx", (0, 1, 1, 0), control, target))
    return ops


def run(kernels, qubits: int, ops, repeats: int) -> float:
    """Returns the best-of-N mean time per gate application in microseconds."""
    best = math.inf
    for _ in range(repeats):
        state = np.zeros(1 << qubits, dtype=np.complex128)
        state[0] = 1
        t0 = time.perf_counter()
        for op in ops:
            if op[0] == "1q":
                kernels.apply_gate1(state, *op[1], op[2])
            else:
                kernels.apply_controlled(state, *op[1], op[2], op[3])
        best = min(best, (time.perf_counter() - t0) / len(ops) * 1e6)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--qubits", type=int, nargs="+", default=[8, 12, 16, 18])
    parser.add_argument("--gates", type=int, default=200)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if _kernels_cy is None:
        print("compiled extension not built; showing the numpy fallback only\n")

    header = f"{'qubits':>6}  {'numpy us/gate':>14}"
    if _kernels_cy is not None:
        header += f"  {'cython us/gate':>15}  {'speedup':>8}"
    print(header)
    for qubits in args.qubits:
        ops = random_ops(qubits, args.gates)
        py = run(_kernels_py, qubits, ops, args.repeats)
        line = f"{qubits:>6}  {py:>14.2f}"
        if _kernels_cy is not None:
            cy = run(_kernels_cy, qubits, ops, args.repeats)
            line += f"  {cy:>15.2f}  {py / cy:>7.1f}x"
        print(line)


if __name__ == "__main__":
    main()
