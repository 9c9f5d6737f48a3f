"""Wire-protocol server wrapping the emulator as a quantum runtime.

Processes one QuantumExecuteRequest at a time (quantum exclusivity at the
backend level). The artificial delay knob models slow hardware for the
scheduler and benchmark harness.
"""

from __future__ import annotations

import threading
import time

from qistack import cqasm, wire
from qistack.emulator import simulator

DEFAULT_SEED = 1234


class QuantumRuntimeServer:
    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = wire.DEFAULT_QUANTUM_PORT,
        seed: int = DEFAULT_SEED,
        delay_s: float = 0.0,
    ):
        self.seed = seed
        self.delay_s = delay_s
        self._busy = threading.Lock()
        self._server = wire.WireServer(self._handle, host=host, port=port)
        self.host = self._server.host
        self.port = self._server.port

    def _handle(self, msg: wire.ProtocolMessage) -> wire.ProtocolMessage:
        if isinstance(msg, wire.TerminateRequest):
            return wire.TerminateReply()
        if not isinstance(msg, wire.QuantumExecuteRequest):
            return wire.ErrorReply(code="bad_request", message=f"unsupported type {msg.TYPE}")
        with self._busy:
            try:
                circuit = cqasm.parse(msg.circuit)
                histogram = simulator.simulate(circuit, msg.shots, self.seed)
            except cqasm.ParseError as exc:
                return wire.ErrorReply(code="parse_error", message=str(exc))
            except simulator.SimulatorError as exc:
                return wire.ErrorReply(code="simulation_error", message=str(exc))
            except ValueError as exc:
                return wire.ErrorReply(code="bad_request", message=str(exc))
            if self.delay_s > 0:
                time.sleep(self.delay_s)
        return wire.QuantumExecuteReply(histogram=histogram)

    def start(self) -> "QuantumRuntimeServer":
        self._server.start()
        return self

    def stop(self) -> None:
        self._server.stop()

    def __enter__(self) -> "QuantumRuntimeServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
