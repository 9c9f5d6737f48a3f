"""Shared domain types and the job lifecycle state machine.

Everything in here is an immutable value object; state transitions return new
``Job`` values instead of mutating. The JSON forms produced by the ``*_to_json``
helpers are the canonical external representation used by the REST API and the
accounting ledger.
"""

from __future__ import annotations

import time
import uuid
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Optional, Union


class ModelError(Exception):
    """Base class for domain-model errors."""


class IllegalTransition(ModelError):
    """A (state, event) pair with no legal lifecycle edge."""


class HistogramError(ModelError):
    pass


class WidthMismatch(HistogramError):
    """Histogram key width does not match the declared qubit count."""


class CountMismatch(HistogramError):
    """Histogram counts do not sum to the declared shot total."""


class JobKind(str, Enum):
    PURE_QUANTUM = "pure_quantum"
    HYBRID = "hybrid"


class JobState(str, Enum):
    QUEUED = "queued"
    DISPATCHED = "dispatched"
    INITIALIZING = "initializing"
    RUNNING_CLASSICAL = "running_classical"
    RUNNING_QUANTUM = "running_quantum"
    FINALIZING = "finalizing"
    COMPLETED = "completed"
    FAILED = "failed"
    TIMED_OUT = "timed_out"
    CANCELLED = "cancelled"


TERMINAL_STATES = frozenset(
    {JobState.COMPLETED, JobState.FAILED, JobState.TIMED_OUT, JobState.CANCELLED}
)

LIFECYCLE_EVENTS = (
    "dispatch",
    "init_ok",
    "classical_step",
    "quantum_step",
    "finalize",
    "complete",
    "fail",
    "timeout",
    "cancel",
)


class BackendStatus(str, Enum):
    IDLE = "idle"
    EXECUTING = "executing"
    CALIBRATING = "calibrating"
    OFFLINE = "offline"


@dataclass(frozen=True)
class Origin:
    """Submitting site and user of a job."""

    cluster: str
    user: str

    def __post_init__(self) -> None:
        if not self.cluster or not self.user:
            raise ValueError("origin cluster and user must be non-empty")


@dataclass(frozen=True)
class CircuitText:
    """Pure-quantum payload: cQASM source text."""

    text: str


@dataclass(frozen=True)
class HybridProgram:
    """Hybrid payload: an external executable honoring the stdio step contract."""

    executable_path: str
    args: tuple[str, ...] = ()
    max_iterations: int = 1

    def __post_init__(self) -> None:
        if not self.executable_path:
            raise ValueError("executable_path must be non-empty")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        object.__setattr__(self, "args", tuple(self.args))

    @property
    def identity(self) -> tuple[str, tuple[str, ...]]:
        return (self.executable_path, self.args)


JobPayload = Union[CircuitText, HybridProgram]

DEFAULT_JOB_TIMEOUT_MS = 300_000


def now_ms() -> int:
    return int(time.time() * 1000)


@dataclass(frozen=True)
class Job:
    """One unit of work: a pure circuit execution or a hybrid step loop."""

    id: str
    origin: Origin
    kind: JobKind
    payload: JobPayload
    shots: int
    backend: str
    priority: int = 0
    reservation_id: Optional[str] = None
    timeout: int = DEFAULT_JOB_TIMEOUT_MS  # wall-clock cap, milliseconds
    state: JobState = JobState.QUEUED
    submitted_at: int = field(default_factory=now_ms)
    started_at: Optional[int] = None
    finished_at: Optional[int] = None

    def __post_init__(self) -> None:
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")

    @property
    def is_terminal(self) -> bool:
        return self.state in TERMINAL_STATES


def new_job_id() -> str:
    return str(uuid.uuid4())


# Lifecycle edges: (state, event) -> target, optionally restricted to one kind.
# Events name the unit of work that just finished (quantum_step fired in
# RUNNING_QUANTUM means the quantum execution completed and control returns to
# the classical side for hybrid jobs).
_EDGES: dict[tuple[JobState, str], tuple[JobState, Optional[JobKind]]] = {
    (JobState.QUEUED, "dispatch"): (JobState.DISPATCHED, None),
    (JobState.QUEUED, "cancel"): (JobState.CANCELLED, None),
    (JobState.DISPATCHED, "init_ok"): (JobState.INITIALIZING, JobKind.HYBRID),
    (JobState.DISPATCHED, "quantum_step"): (JobState.RUNNING_QUANTUM, JobKind.PURE_QUANTUM),
    (JobState.DISPATCHED, "fail"): (JobState.FAILED, None),
    (JobState.INITIALIZING, "classical_step"): (JobState.RUNNING_CLASSICAL, None),
    (JobState.INITIALIZING, "fail"): (JobState.FAILED, None),
    (JobState.INITIALIZING, "timeout"): (JobState.TIMED_OUT, None),
    (JobState.RUNNING_CLASSICAL, "quantum_step"): (JobState.RUNNING_QUANTUM, None),
    (JobState.RUNNING_CLASSICAL, "finalize"): (JobState.FINALIZING, None),
    (JobState.RUNNING_CLASSICAL, "fail"): (JobState.FAILED, None),
    (JobState.RUNNING_CLASSICAL, "timeout"): (JobState.TIMED_OUT, None),
    (JobState.RUNNING_QUANTUM, "quantum_step"): (JobState.RUNNING_CLASSICAL, JobKind.HYBRID),
    (JobState.RUNNING_QUANTUM, "finalize"): (JobState.FINALIZING, JobKind.PURE_QUANTUM),
    (JobState.RUNNING_QUANTUM, "fail"): (JobState.FAILED, None),
    (JobState.RUNNING_QUANTUM, "timeout"): (JobState.TIMED_OUT, None),
    (JobState.FINALIZING, "complete"): (JobState.COMPLETED, None),
    (JobState.FINALIZING, "fail"): (JobState.FAILED, None),
}


def advance_state(job: Job, event: str, now: Optional[int] = None) -> Job:
    """Move a job along one legal lifecycle edge.

    Pure given an explicit ``now``; raises :class:`IllegalTransition` when the
    (state, event) pair has no edge for the job's kind.
    """
    if event not in LIFECYCLE_EVENTS:
        raise IllegalTransition(f"unknown lifecycle event {event!r}")
    edge = _EDGES.get((job.state, event))
    if edge is None:
        raise IllegalTransition(f"no edge for ({job.state.value}, {event})")
    target, kind_restriction = edge
    if kind_restriction is not None and job.kind != kind_restriction:
        raise IllegalTransition(
            f"edge ({job.state.value}, {event}) only legal for {kind_restriction.value} jobs"
        )
    stamp = now_ms() if now is None else now
    started = job.started_at
    finished = job.finished_at
    if job.state == JobState.QUEUED and target == JobState.DISPATCHED and started is None:
        started = stamp
    if target in TERMINAL_STATES and finished is None:
        finished = stamp
    return replace(job, state=target, started_at=started, finished_at=finished)


@dataclass(frozen=True)
class Histogram:
    """Measurement outcome counts keyed by bitstring (qubit 0 rightmost)."""

    counts: dict[str, int]
    shots: int

    def __post_init__(self) -> None:
        if self.shots < 1:
            raise ValueError("shots must be >= 1")


def validate_histogram(h: Histogram, qubits: int) -> None:
    """Check key widths against the qubit count and counts against shots."""
    for key in h.counts:
        if len(key) != qubits or any(c not in "01" for c in key):
            raise WidthMismatch(f"key {key!r} is not a {qubits}-bit string")
        if h.counts[key] < 0:
            raise CountMismatch(f"negative count for key {key!r}")
    total = sum(h.counts.values())
    if total != h.shots:
        raise CountMismatch(f"counts sum to {total}, expected {h.shots}")


@dataclass(frozen=True)
class LatencyReport:
    """Dispatcher-side timing per job, all durations in integer microseconds."""

    initialization: int
    per_step_execution: tuple[int, ...]
    termination: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "per_step_execution", tuple(self.per_step_execution))
        if self.initialization < 0 or self.termination < 0:
            raise ValueError("durations must be >= 0")
        if any(d < 0 for d in self.per_step_execution):
            raise ValueError("durations must be >= 0")


@dataclass(frozen=True)
class JobResult:
    histograms: tuple[Histogram, ...]
    final_payload: Any
    iterations: int
    latency: LatencyReport

    def __post_init__(self) -> None:
        object.__setattr__(self, "histograms", tuple(self.histograms))


@dataclass(frozen=True)
class AccountingRecord:
    """One append-only usage record per terminal job."""

    job_id: str
    origin: Origin
    backend: str
    submitted_at: int
    started_at: Optional[int]
    finished_at: Optional[int]
    final_state: JobState
    quantum_busy_ms: int
    iterations: int


@dataclass(frozen=True)
class Reservation:
    """Exclusive time window on a backend, half-open [start, end)."""

    id: str
    holder: Origin
    backend: str
    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start >= self.end:
            raise ValueError("reservation start must precede end")

    def active_at(self, now: int) -> bool:
        return self.start <= now < self.end

    def overlaps(self, other: "Reservation") -> bool:
        return self.backend == other.backend and self.start < other.end and other.start < self.end


# ---------------------------------------------------------------------------
# Canonical JSON serialization (snake_case field names, ms timestamps)
# ---------------------------------------------------------------------------


def origin_to_json(o: Origin) -> dict:
    return {"cluster": o.cluster, "user": o.user}


def origin_from_json(d: dict) -> Origin:
    return Origin(cluster=d["cluster"], user=d["user"])


def payload_to_json(p: JobPayload) -> dict:
    if isinstance(p, CircuitText):
        return {"circuit_text": p.text}
    return {
        "hybrid_program": {
            "executable_path": p.executable_path,
            "args": list(p.args),
            "max_iterations": p.max_iterations,
        }
    }


def payload_from_json(d: dict) -> JobPayload:
    if "circuit_text" in d:
        return CircuitText(text=d["circuit_text"])
    if "hybrid_program" in d:
        hp = d["hybrid_program"]
        return HybridProgram(
            executable_path=hp["executable_path"],
            args=tuple(hp.get("args", ())),
            max_iterations=hp.get("max_iterations", 1),
        )
    raise ValueError("payload must contain circuit_text or hybrid_program")


def job_to_json(job: Job) -> dict:
    return {
        "id": job.id,
        "origin": origin_to_json(job.origin),
        "kind": job.kind.value,
        "payload": payload_to_json(job.payload),
        "shots": job.shots,
        "priority": job.priority,
        "reservation_id": job.reservation_id,
        "timeout": job.timeout,
        "state": job.state.value,
        "submitted_at": job.submitted_at,
        "started_at": job.started_at,
        "finished_at": job.finished_at,
        "backend": job.backend,
    }


def job_from_json(d: dict) -> Job:
    return Job(
        id=d["id"],
        origin=origin_from_json(d["origin"]),
        kind=JobKind(d["kind"]),
        payload=payload_from_json(d["payload"]),
        shots=d["shots"],
        priority=d.get("priority", 0),
        reservation_id=d.get("reservation_id"),
        timeout=d.get("timeout", DEFAULT_JOB_TIMEOUT_MS),
        state=JobState(d["state"]),
        submitted_at=d["submitted_at"],
        started_at=d.get("started_at"),
        finished_at=d.get("finished_at"),
        backend=d["backend"],
    )


def histogram_to_json(h: Histogram) -> dict:
    return {"counts": dict(h.counts), "shots": h.shots}


def histogram_from_json(d: dict) -> Histogram:
    return Histogram(counts=dict(d["counts"]), shots=d["shots"])


def latency_to_json(r: LatencyReport) -> dict:
    return {
        "initialization": r.initialization,
        "per_step_execution": list(r.per_step_execution),
        "termination": r.termination,
    }


def latency_from_json(d: dict) -> LatencyReport:
    return LatencyReport(
        initialization=d["initialization"],
        per_step_execution=tuple(d["per_step_execution"]),
        termination=d["termination"],
    )


def result_to_json(r: JobResult) -> dict:
    return {
        "histograms": [histogram_to_json(h) for h in r.histograms],
        "final_payload": r.final_payload,
        "iterations": r.iterations,
        "latency": latency_to_json(r.latency),
    }


def result_from_json(d: dict) -> JobResult:
    return JobResult(
        histograms=tuple(histogram_from_json(h) for h in d["histograms"]),
        final_payload=d.get("final_payload"),
        iterations=d["iterations"],
        latency=latency_from_json(d["latency"]),
    )


def accounting_to_json(r: AccountingRecord) -> dict:
    return {
        "job_id": r.job_id,
        "origin": origin_to_json(r.origin),
        "backend": r.backend,
        "submitted_at": r.submitted_at,
        "started_at": r.started_at,
        "finished_at": r.finished_at,
        "final_state": r.final_state.value,
        "quantum_busy_ms": r.quantum_busy_ms,
        "iterations": r.iterations,
    }


def accounting_from_json(d: dict) -> AccountingRecord:
    return AccountingRecord(
        job_id=d["job_id"],
        origin=origin_from_json(d["origin"]),
        backend=d["backend"],
        submitted_at=d["submitted_at"],
        started_at=d.get("started_at"),
        finished_at=d.get("finished_at"),
        final_state=JobState(d["final_state"]),
        quantum_busy_ms=d["quantum_busy_ms"],
        iterations=d["iterations"],
    )


def reservation_to_json(r: Reservation) -> dict:
    return {
        "id": r.id,
        "holder": origin_to_json(r.holder),
        "backend": r.backend,
        "start": r.start,
        "end": r.end,
    }


def reservation_from_json(d: dict) -> Reservation:
    return Reservation(
        id=d["id"],
        holder=origin_from_json(d["holder"]),
        backend=d["backend"],
        start=d["start"],
        end=d["end"],
    )
