"""Task dispatcher: drives one job's lifecycle across the classical and
quantum runtimes, enforcing quantum exclusivity and recording latency.

Stop conditions for hybrid jobs, in priority order: wall-clock timeout, the
program's done message, then max_iterations.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Optional

from qistack import cqasm, runtime, wire
from qistack.model import (
    CircuitText,
    Histogram,
    HybridProgram,
    Job,
    JobKind,
    JobPayload,
    JobResult,
    JobState,
    LatencyReport,
    advance_state,
    validate_histogram,
)

log = logging.getLogger(__name__)


@dataclass
class DispatchConfig:
    step_deadline_s: float = 60.0
    job_timeout_default_ms: int = 300_000
    hot_pool_size: int = 0
    quantum_host: str = "127.0.0.1"
    quantum_port: int = wire.DEFAULT_QUANTUM_PORT
    init_timeout_s: float = 30.0
    sandbox_root: Optional[str] = None
    runtime_config: dict = field(default_factory=dict)


@dataclass
class JobOutcome:
    final_state: JobState
    result: Optional[JobResult] = None
    error: Optional[dict] = None
    quantum_busy_ms: int = 0


class BackendGate:
    """Exclusivity gate for one quantum backend; tracks peak concurrency so
    tests can assert it never exceeds 1."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._meta = threading.Lock()
        self._active = 0
        self.peak_active = 0

    def acquire(self) -> None:
        self._lock.acquire()
        with self._meta:
            self._active += 1
            self.peak_active = max(self.peak_active, self._active)

    def release(self) -> None:
        with self._meta:
            self._active -= 1
        self._lock.release()


def detect_kind(payload: JobPayload) -> JobKind:
    """Tag-directed: no validation here, parse errors surface at dispatch."""
    return JobKind.PURE_QUANTUM if isinstance(payload, CircuitText) else JobKind.HYBRID


class CancelledError(Exception):
    pass


class Dispatcher:
    def __init__(
        self,
        config: DispatchConfig,
        gate: Optional[BackendGate] = None,
        pool: Optional[runtime.HandlePool] = None,
    ):
        self.config = config
        self.gate = gate or BackendGate()
        self.pool = pool or runtime.HandlePool()

    # -- quantum side -------------------------------------------------------

    def _quantum_execute(
        self, conn: wire.Connection, circuit_text: str, shots: int, deadline_s: float
    ) -> tuple[Histogram, int]:
        """Returns (histogram, round_trip_us); holds the backend gate."""
        self.gate.acquire()
        try:
            t0 = time.monotonic()
            reply = conn.request(
                wire.QuantumExecuteRequest(circuit=circuit_text, shots=shots), deadline_s
            )
            round_trip_us = int((time.monotonic() - t0) * 1e6)
        finally:
            self.gate.release()
        if isinstance(reply, wire.ErrorReply):
            raise wire.WireError(f"quantum runtime error [{reply.code}]: {reply.message}")
        if not isinstance(reply, wire.QuantumExecuteReply):
            raise wire.ProtocolViolation(f"unexpected reply type {reply.TYPE}")
        return reply.histogram, round_trip_us

    def _connect_quantum(self) -> wire.Connection:
        return wire.Connection.connect(self.config.quantum_host, self.config.quantum_port)

    # -- pure quantum jobs --------------------------------------------------

    def run_pure(self, job: Job) -> tuple[Job, JobOutcome]:
        assert job.state == JobState.DISPATCHED and job.kind == JobKind.PURE_QUANTUM
        try:
            circuit = cqasm.parse(job.payload.text)
        except cqasm.ParseError as exc:
            job = advance_state(job, "fail")
            return job, JobOutcome(job.state, error={"code": "parse_error", "message": str(exc)})
        deadline_s = min(self.config.step_deadline_s, job.timeout / 1000.0)
        try:
            conn = self._connect_quantum()
        except wire.ConnectionLost as exc:
            job = advance_state(job, "fail")
            return job, JobOutcome(job.state, error={"code": "quantum_unreachable", "message": str(exc)})
        job = advance_state(job, "quantum_step")
        try:
            histogram, round_trip_us = self._quantum_execute(
                conn, job.payload.text, job.shots, deadline_s
            )
            validate_histogram(histogram, circuit.qubits)
        except wire.Timeout as exc:
            job = advance_state(job, "timeout")
            return job, JobOutcome(job.state, error={"code": "timeout", "message": str(exc)})
        except Exception as exc:
            job = advance_state(job, "fail")
            return job, JobOutcome(job.state, error={"code": "quantum_error", "message": str(exc)})
        finally:
            conn.close()
        job = advance_state(job, "finalize")
        job = advance_state(job, "complete")
        result = JobResult(
            histograms=(histogram,),
            final_payload=None,
            iterations=1,
            latency=LatencyReport(0, (round_trip_us,), 0),
        )
        return job, JobOutcome(
            job.state, result=result, quantum_busy_ms=round_trip_us // 1000
        )

    # -- hybrid jobs --------------------------------------------------------

    def _take_or_spawn(self, program: HybridProgram, config: Any) -> tuple[runtime.RuntimeHandle, int]:
        t0 = time.monotonic()
        handle = self.pool.take(program)
        if handle is not None:
            init_us = int((time.monotonic() - t0) * 1e6)
            if self.config.hot_pool_size > 0:
                self._replenish_async(program)
            return handle, init_us
        handle = runtime.spawn(
            program,
            config,
            init_timeout_s=self.config.init_timeout_s,
            sandbox_root=self.config.sandbox_root,
        )
        return handle, handle.init_duration_us

    def _replenish_async(self, program: HybridProgram) -> None:
        def _spawn_one() -> None:
            if self.pool.size(program) >= self.config.hot_pool_size:
                return
            try:
                self.pool.put(
                    runtime.spawn(
                        program,
                        self.config.runtime_config,
                        init_timeout_s=self.config.init_timeout_s,
                        sandbox_root=self.config.sandbox_root,
                    )
                )
            except runtime.RuntimeError_ as exc:
                log.warning("hot pool replenish failed: %s", exc)

        threading.Thread(target=_spawn_one, daemon=True).start()

    def prewarm(self, program: HybridProgram, n: int) -> int:
        """Spawn up to min(n, hot_pool_size) Ready handles into the pool."""
        target = min(n, self.config.hot_pool_size)
        warmed = 0
        while warmed < target and self.pool.size(program) < self.config.hot_pool_size:
            try:
                self.pool.put(
                    runtime.spawn(
                        program,
                        self.config.runtime_config,
                        init_timeout_s=self.config.init_timeout_s,
                        sandbox_root=self.config.sandbox_root,
                    )
                )
                warmed += 1
            except runtime.RuntimeError_ as exc:
                log.error("prewarm spawn failed: %s", exc)
                break
        return warmed

    def run_hybrid(
        self, job: Job, cancel_event: Optional[threading.Event] = None
    ) -> tuple[Job, JobOutcome]:
        assert job.state == JobState.DISPATCHED and job.kind == JobKind.HYBRID
        program: HybridProgram = job.payload
        deadline_at = time.monotonic() + job.timeout / 1000.0
        quantum_busy_ms = 0

        def remaining() -> float:
            return deadline_at - time.monotonic()

        job = advance_state(job, "init_ok")
        try:
            handle, init_us = self._take_or_spawn(program, self.config.runtime_config)
        except runtime.InitTimeout as exc:
            job = advance_state(job, "timeout")
            return job, JobOutcome(
                job.state,
                error={"code": "init_timeout", "message": str(exc), "diagnostics": exc.diagnostics},
            )
        except runtime.RuntimeError_ as exc:
            job = advance_state(job, "fail")
            return job, JobOutcome(
                job.state,
                error={"code": "spawn_failed", "message": str(exc), "diagnostics": exc.diagnostics},
            )

        histograms: list[Histogram] = []
        per_step_us: list[int] = []
        final_payload: Any = None
        outcome_error: Optional[dict] = None
        timed_out = False
        completed = False
        conn: Optional[wire.Connection] = None
        measurements: Optional[Histogram] = None
        try:
            conn = self._connect_quantum()
            job = advance_state(job, "classical_step")
            while True:
                if cancel_event is not None and cancel_event.is_set():
                    raise CancelledError("job cancelled")
                if remaining() <= 0:
                    timed_out = True
                    break
                step_t0 = time.monotonic()
                reply = runtime.step(
                    handle, measurements, min(self.config.step_deadline_s, remaining())
                )
                if reply.done:
                    final_payload = reply.final_payload
                    completed = True
                    break
                circuit = cqasm.parse(reply.circuit)
                if not circuit.measures:
                    raise cqasm.CircuitSyntaxError("hybrid circuit must end in measure_all")
                if remaining() <= 0:
                    timed_out = True
                    break
                job = advance_state(job, "quantum_step")  # -> RunningQuantum
                histogram, round_trip_us = self._quantum_execute(
                    conn, reply.circuit, job.shots, min(self.config.step_deadline_s, remaining())
                )
                job = advance_state(job, "quantum_step")  # hybrid: back to RunningClassical
                validate_histogram(histogram, circuit.qubits)
                quantum_busy_ms += round_trip_us // 1000
                histograms.append(histogram)
                per_step_us.append(int((time.monotonic() - step_t0) * 1e6))
                measurements = histogram
                if len(histograms) >= program.max_iterations:
                    completed = True
                    break
        except runtime.StepTimeout as exc:
            timed_out = True
            outcome_error = {
                "code": "step_timeout", "message": str(exc), "diagnostics": exc.diagnostics,
            }
        except wire.Timeout as exc:
            timed_out = True
            outcome_error = {"code": "quantum_timeout", "message": str(exc)}
        except CancelledError as exc:
            outcome_error = {"code": "cancelled", "message": str(exc)}
        except runtime.RuntimeError_ as exc:
            outcome_error = {
                "code": exc.__class__.__name__.lower(),
                "message": str(exc),
                "diagnostics": exc.diagnostics,
            }
        except cqasm.ParseError as exc:
            outcome_error = {"code": "parse_error", "message": str(exc)}
        except Exception as exc:
            outcome_error = {"code": "internal", "message": str(exc)}
        finally:
            diagnostics = runtime.terminate(handle)
            if conn is not None:
                conn.close()

        if timed_out:
            job = advance_state(job, "timeout")
            error = outcome_error or {"code": "timeout", "message": "job wall-clock cap exceeded"}
            error.setdefault("diagnostics", diagnostics)
            return job, JobOutcome(job.state, error=error, quantum_busy_ms=quantum_busy_ms)
        if not completed:
            job = advance_state(job, "fail")
            error = outcome_error or {"code": "internal", "message": "hybrid loop aborted"}
            error.setdefault("diagnostics", diagnostics)
            return job, JobOutcome(job.state, error=error, quantum_busy_ms=quantum_busy_ms)

        job = advance_state(job, "finalize")
        job = advance_state(job, "complete")
        result = JobResult(
            histograms=tuple(histograms),
            final_payload=final_payload,
            iterations=len(histograms),
            latency=LatencyReport(init_us, tuple(per_step_us), handle.termination_duration_us),
        )
        return job, JobOutcome(job.state, result=result, quantum_busy_ms=quantum_busy_ms)

    def run_job(
        self, job: Job, cancel_event: Optional[threading.Event] = None
    ) -> tuple[Job, JobOutcome]:
        if job.kind == JobKind.PURE_QUANTUM:
            return self.run_pure(job)
        return self.run_hybrid(job, cancel_event)
