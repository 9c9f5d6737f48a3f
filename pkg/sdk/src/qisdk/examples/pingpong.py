"""Ping-pong reference program: request the same 2-qubit circuit every
iteration and let the server's iteration cap end the job."""

from __future__ import annotations

from qisdk.hybrid import run_hybrid_loop

CIRCUIT = "version 1.0; qubits 2; H q[0]; measure_all"


def main() -> None:
    run_hybrid_loop(lambda measurements: CIRCUIT, max_iterations=10)


if __name__ == "__main__":
    main()
