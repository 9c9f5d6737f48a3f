"""Wires the subsystems into one co-located service: emulator runtime,
job manager, dispatcher poller, storage, and accounting."""

from __future__ import annotations

import logging
import os
import threading
from typing import Optional

from qistack.config import ServerConfig
from qistack.dispatcher import BackendGate, DispatchConfig, Dispatcher, JobOutcome
from qistack.emulator.server import QuantumRuntimeServer
from qistack.model import (
    AccountingRecord,
    BackendStatus,
    HybridProgram,
    Job,
    JobResult,
    JobState,
)
from qistack.scheduler import JobManager, SchedulerPolicy
from qistack.store import AccountingLedger, Journal, TokenStore

log = logging.getLogger(__name__)


class OrchestratorService:
    """Owns the shared state behind the REST API and the dispatch loop."""

    def __init__(self, config: ServerConfig):
        self.config = config
        os.makedirs(config.data_dir, exist_ok=True)
        self.journal = Journal(os.path.join(config.data_dir, "journal.ndjson"))
        self.ledger = AccountingLedger(os.path.join(config.data_dir, "accounting.ndjson"))
        self.tokens = TokenStore(self.journal)

        policy = SchedulerPolicy(
            mode=config.scheduler_mode,
            fair_use_cap=config.fair_use_cap,
            fair_use_window=config.fair_use_window,
            reservations_enabled=config.reservations_enabled,
        )
        self.manager = JobManager(
            policy=policy, backend=config.backend, on_cancel_running=self._signal_cancel
        )
        self._recover_jobs()

        self.quantum = QuantumRuntimeServer(
            host=config.host,
            port=config.quantum_port,
            seed=config.emulator_seed,
            delay_s=config.emulator_delay_s,
        )
        self.gate = BackendGate()
        self.dispatcher = Dispatcher(
            DispatchConfig(
                step_deadline_s=config.step_deadline_s,
                job_timeout_default_ms=config.job_timeout_default_ms,
                hot_pool_size=config.hot_pool_size,
                quantum_host=self.quantum.host,
                quantum_port=self.quantum.port,
                init_timeout_s=config.init_timeout_s,
                sandbox_root=os.path.join(config.data_dir, "sandbox"),
            ),
            gate=self.gate,
        )
        os.makedirs(self.dispatcher.config.sandbox_root, exist_ok=True)

        self.results: dict[str, JobResult] = {}
        self.errors: dict[str, dict] = {}
        self._cancel_events: dict[str, threading.Event] = {}
        self._cancel_lock = threading.Lock()
        self._stop = threading.Event()
        self._poller: Optional[threading.Thread] = None

    def _recover_jobs(self) -> None:
        # Jobs caught mid-flight by a crash are marked Failed; no replay.
        for job in self.journal.load_jobs():
            if not job.is_terminal and job.state != JobState.QUEUED:
                job = _force_failed(job)
                self.journal.record_job(job)
            if job.state == JobState.QUEUED:
                self.manager.enqueue(job)
            else:
                self.manager.restore(job)

    def _signal_cancel(self, job_id: str) -> None:
        with self._cancel_lock:
            event = self._cancel_events.get(job_id)
        if event is not None:
            event.set()

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> "OrchestratorService":
        self.quantum.start()
        if self.config.hot_pool_size > 0 and self.config.prewarm_executable:
            program = HybridProgram(
                executable_path=self.config.prewarm_executable,
                args=self.config.prewarm_args,
                max_iterations=1,
            )
            warmed = self.dispatcher.prewarm(program, self.config.hot_pool_size)
            log.info("prewarmed %d classical runtime handle(s)", warmed)
        self._poller = threading.Thread(target=self._poll_loop, daemon=True)
        self._poller.start()
        log.info(
            "service ready: backend=%s quantum_port=%d", self.config.backend, self.quantum.port
        )
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._poller is not None:
            self._poller.join(timeout=5)
        self.dispatcher.pool.drain()
        self.quantum.stop()

    # -- dispatch loop ------------------------------------------------------

    def _poll_loop(self) -> None:
        while not self._stop.is_set():
            status = self.manager.backend_status()
            job = self.manager.next_dispatch(status=status)
            if job is None:
                self._stop.wait(self.config.poll_interval_s)
                continue
            self._run_one(job)

    def _run_one(self, job: Job) -> None:
        self.journal.record_job(job)
        event = threading.Event()
        with self._cancel_lock:
            self._cancel_events[job.id] = event
        previous_status = self.manager.backend_status()
        self.manager.set_backend_status(self.manager.backend, BackendStatus.EXECUTING)
        try:
            final_job, outcome = self.dispatcher.run_job(job, cancel_event=event)
        except Exception as exc:  # dispatcher bug: never wedge the poller
            log.exception("dispatch failed for job %s", job.id)
            final_job = _force_failed(job)
            outcome = JobOutcome(
                final_job.state, error={"code": "internal", "message": str(exc)}
            )
        finally:
            with self._cancel_lock:
                self._cancel_events.pop(job.id, None)
            if self.manager.backend_status() == BackendStatus.EXECUTING:
                self.manager.set_backend_status(self.manager.backend, previous_status)
        self.journal.record_job(final_job)
        if outcome.result is not None:
            self.results[final_job.id] = outcome.result
        if outcome.error is not None:
            self.errors[final_job.id] = outcome.error
        self.account(final_job, outcome)
        # Publish the terminal state last: anything observing it (pollers,
        # accounting consumers) must already see the result and ledger row.
        self.manager.update(final_job)

    def account(self, job: Job, outcome: Optional[JobOutcome] = None) -> None:
        self.ledger.append(
            AccountingRecord(
                job_id=job.id,
                origin=job.origin,
                backend=job.backend,
                submitted_at=job.submitted_at,
                started_at=job.started_at,
                finished_at=job.finished_at,
                final_state=job.state,
                quantum_busy_ms=outcome.quantum_busy_ms if outcome else 0,
                iterations=outcome.result.iterations if outcome and outcome.result else 0,
            )
        )


def _force_failed(job: Job) -> Job:
    from dataclasses import replace

    from qistack.model import now_ms

    return replace(job, state=JobState.FAILED, finished_at=job.finished_at or now_ms())
