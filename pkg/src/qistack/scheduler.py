"""Job admission, ordering, reservations, and fair use.

Pull model: the dispatcher poller calls :meth:`JobManager.next_dispatch` when
the backend frees up; selection and the Queued->Dispatched transition happen
atomically under one lock so a job can never be dispatched twice.

Tie-breaking everywhere: (priority desc, submitted_at asc, job_id asc).
"""

from __future__ import annotations

import math
import threading
from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

from qistack.model import (
    BackendStatus,
    Job,
    JobState,
    Reservation,
    advance_state,
    now_ms,
)


class SchedulerError(Exception):
    pass


class DuplicateId(SchedulerError):
    pass


class UnknownJob(SchedulerError):
    pass


class AlreadyTerminal(SchedulerError):
    pass


class Overlap(SchedulerError):
    pass


class ReservationsDisabled(SchedulerError):
    pass


@dataclass
class SchedulerPolicy:
    mode: str = "fifo"  # "fifo" | "priority"
    fair_use_cap: Optional[float] = None  # fraction of dispatches per cluster
    fair_use_window: int = 20
    reservations_enabled: bool = False

    def __post_init__(self) -> None:
        if self.mode not in ("fifo", "priority"):
            raise ValueError(f"unknown scheduler mode {self.mode!r}")
        if self.fair_use_cap is not None and not (0 < self.fair_use_cap <= 1):
            raise ValueError("fair_use_cap must be in (0, 1]")


_SKIP_BOOST_THRESHOLD = 3  # consecutive fair-use skips before a priority boost


class JobManager:
    def __init__(
        self,
        policy: Optional[SchedulerPolicy] = None,
        backend: str = "emulator-1",
        on_cancel_running: Optional[Callable[[str], None]] = None,
    ):
        self.policy = policy or SchedulerPolicy()
        self.backend = backend
        self._lock = threading.RLock()
        self._jobs: dict[str, Job] = {}
        self._reservations: list[Reservation] = []
        self._statuses: dict[str, BackendStatus] = {backend: BackendStatus.IDLE}
        self._dispatch_history: deque[str] = deque(maxlen=1024)  # cluster per dispatch
        self._skips: dict[str, int] = {}
        self._boosts: dict[str, int] = {}
        self._on_cancel_running = on_cancel_running

    # -- admission ----------------------------------------------------------

    def enqueue(self, job: Job) -> int:
        """Admit a Queued job unconditionally; returns its current position."""
        if job.state != JobState.QUEUED:
            raise SchedulerError("only Queued jobs can be enqueued")
        with self._lock:
            if job.id in self._jobs:
                raise DuplicateId(job.id)
            self._jobs[job.id] = job
            position = self.queue_position(job.id)
            return 0 if position is None else position

    def get(self, job_id: str) -> Job:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise UnknownJob(job_id)
            return job

    def restore(self, job: Job) -> None:
        """Reload a non-queued job from persistence (startup recovery)."""
        with self._lock:
            self._jobs[job.id] = job

    def update(self, job: Job) -> None:
        with self._lock:
            if job.id not in self._jobs:
                raise UnknownJob(job.id)
            self._jobs[job.id] = job

    # -- ordering -----------------------------------------------------------

    def _effective_priority(self, job: Job) -> int:
        if self.policy.mode == "fifo":
            return 0
        return job.priority + self._boosts.get(job.id, 0)

    def _order_key(self, job: Job):
        return (-self._effective_priority(job), job.submitted_at, job.id)

    def _queued(self) -> list[Job]:
        return sorted(
            (j for j in self._jobs.values() if j.state == JobState.QUEUED),
            key=self._order_key,
        )

    def _active_reservation(self, now: int) -> Optional[Reservation]:
        if not self.policy.reservations_enabled:
            return None
        for r in self._reservations:
            if r.backend == self.backend and r.active_at(now):
                return r
        return None

    def _eligible(self, now: int) -> list[Job]:
        jobs = self._queued()
        reservation = self._active_reservation(now)
        if reservation is not None:
            jobs = [
                j
                for j in jobs
                if j.origin == reservation.holder or j.reservation_id == reservation.id
            ]
        return jobs

    def _ordered_queue(self, now: int) -> list[Job]:
        """All queued jobs: eligible ones first in policy order, then the rest."""
        eligible = self._eligible(now)
        seen = {j.id for j in eligible}
        return eligible + [j for j in self._queued() if j.id not in seen]

    def _fair_use_allows(self, cluster: str, eligible: list[Job]) -> bool:
        cap = self.policy.fair_use_cap
        if cap is None:
            return True
        clusters_waiting = {j.origin.cluster for j in eligible}
        if len(clusters_waiting) < 2:
            return True
        window = self.policy.fair_use_window
        recent = list(self._dispatch_history)[-(window - 1):]
        limit = math.ceil(cap * window)
        return recent.count(cluster) + 1 <= limit

    def next_dispatch(self, now: Optional[int] = None, status: Optional[BackendStatus] = None) -> Optional[Job]:
        """Atomically select and dispatch the head job under the policy."""
        stamp = now_ms() if now is None else now
        with self._lock:
            if status is None:
                status = self._statuses.get(self.backend, BackendStatus.OFFLINE)
            if status != BackendStatus.IDLE:
                return None
            eligible = self._eligible(stamp)
            for job in eligible:
                if not self._fair_use_allows(job.origin.cluster, eligible):
                    skips = self._skips.get(job.id, 0) + 1
                    if skips >= _SKIP_BOOST_THRESHOLD:
                        self._boosts[job.id] = self._boosts.get(job.id, 0) + 1
                        skips = 0
                    self._skips[job.id] = skips
                    continue
                dispatched = advance_state(job, "dispatch", now=stamp)
                self._jobs[job.id] = dispatched
                self._dispatch_history.append(job.origin.cluster)
                self._skips.pop(job.id, None)
                self._boosts.pop(job.id, None)
                return dispatched
            return None

    def queue_position(self, job_id: str) -> Optional[int]:
        with self._lock:
            if job_id not in self._jobs:
                raise UnknownJob(job_id)
            stamp = now_ms()
            for position, job in enumerate(self._ordered_queue(stamp)):
                if job.id == job_id:
                    return position
            return None

    def queue_snapshot(self) -> list[dict]:
        with self._lock:
            return [
                {
                    "job_id": j.id,
                    "origin": {"cluster": j.origin.cluster, "user": j.origin.user},
                    "priority": j.priority,
                    "submitted_at": j.submitted_at,
                    "position": pos,
                }
                for pos, j in enumerate(self._ordered_queue(now_ms()))
            ]

    # -- reservations -------------------------------------------------------

    def add_reservation(self, r: Reservation) -> None:
        if not self.policy.reservations_enabled:
            raise ReservationsDisabled("reservations are disabled by policy")
        with self._lock:
            for existing in self._reservations:
                if existing.overlaps(r):
                    raise Overlap(f"overlaps reservation {existing.id}")
            self._reservations.append(r)

    # -- cancellation -------------------------------------------------------

    def cancel(self, job_id: str) -> Job:
        """Cancel a Queued job directly; signal cooperative cancel for running."""
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise UnknownJob(job_id)
            if job.is_terminal:
                raise AlreadyTerminal(job_id)
            if job.state == JobState.QUEUED:
                cancelled = advance_state(job, "cancel")
                self._jobs[job_id] = cancelled
                return cancelled
            hook = self._on_cancel_running
        if hook is not None:
            hook(job_id)
        return self.get(job_id)

    # -- backend status -----------------------------------------------------

    def set_backend_status(self, backend: str, status: BackendStatus) -> None:
        with self._lock:
            self._statuses[backend] = status

    def backend_status(self, backend: Optional[str] = None) -> BackendStatus:
        with self._lock:
            return self._statuses.get(backend or self.backend, BackendStatus.OFFLINE)

    def backends(self) -> list[dict]:
        with self._lock:
            queue_length = len(self._queued())
            return [
                {"backend": name, "status": status.value, "queue_length": queue_length}
                for name, status in self._statuses.items()
            ]

    def jobs(self) -> list[Job]:
        with self._lock:
            return list(self._jobs.values())
