"""Hosts user hybrid programs as external processes speaking the stdio contract.

Contract (newline-delimited UTF-8 JSON, one object per line, no pretty
printing):

  stdin line 1:  the opaque job config object
  stdout line 1: {"ready": true}                      (readiness signal)
  stdin line k:  {"measurements": <histogram>|null}   (null only on first step)
  stdout line k: {"circuit": "<cqasm>"} or {"done": true, "final_payload": ...}

stderr is captured (capped at 1 MiB) and returned as diagnostics. The child
runs inside a dedicated empty working directory; OS-level isolation is out of
scope.
"""

from __future__ import annotations

import json
import os
import queue
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass
from enum import Enum
from typing import Any, Optional

from qistack.model import Histogram, HybridProgram, histogram_to_json

MAX_LINE_BYTES = 1024 * 1024
MAX_STDERR_BYTES = 1024 * 1024
DEFAULT_INIT_TIMEOUT_S = 30.0
TERMINATE_GRACE_S = 2.0


class RuntimeError_(Exception):
    """Base class for classical-runtime errors."""

    def __init__(self, message: str, diagnostics: str = ""):
        super().__init__(message)
        self.diagnostics = diagnostics


class SpawnFailed(RuntimeError_):
    pass


class InitTimeout(RuntimeError_):
    pass


class StepTimeout(RuntimeError_):
    pass


class BadReply(RuntimeError_):
    pass


class ChildExited(RuntimeError_):
    pass


class HandleState(str, Enum):
    SPAWNED = "spawned"
    READY = "ready"
    STEPPING = "stepping"
    TERMINATED = "terminated"


@dataclass
class StepReply:
    circuit: Optional[str] = None
    done: bool = False
    final_payload: Any = None


class RuntimeHandle:
    """One hosted child process; owned by exactly one job orchestration."""

    def __init__(self, proc: subprocess.Popen, program: HybridProgram, sandbox_dir: str):
        self.proc = proc
        self.pid = proc.pid
        self.program = program
        self.sandbox_dir = sandbox_dir
        self.state = HandleState.SPAWNED
        self.spawn_time = time.time()
        self.init_duration_us = 0
        self.termination_duration_us = 0
        self._lines: queue.Queue = queue.Queue()
        self._stderr = bytearray()
        self._stderr_lock = threading.Lock()
        self._stdout_thread = threading.Thread(target=self._read_stdout, daemon=True)
        self._stderr_thread = threading.Thread(target=self._read_stderr, daemon=True)
        self._stdout_thread.start()
        self._stderr_thread.start()

    def _read_stdout(self) -> None:
        stream = self.proc.stdout
        while True:
            line = stream.readline(MAX_LINE_BYTES + 1)
            if not line:
                self._lines.put(None)
                return
            self._lines.put(line)

    def _read_stderr(self) -> None:
        stream = self.proc.stderr
        while True:
            chunk = stream.read(4096)
            if not chunk:
                return
            with self._stderr_lock:
                if len(self._stderr) < MAX_STDERR_BYTES:
                    self._stderr.extend(chunk[: MAX_STDERR_BYTES - len(self._stderr)])

    def diagnostics(self) -> str:
        with self._stderr_lock:
            return bytes(self._stderr).decode("utf-8", errors="replace")

    def _write_line(self, obj: Any) -> None:
        data = json.dumps(obj, separators=(",", ":")) + "\n"
        try:
            self.proc.stdin.write(data.encode("utf-8"))
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ChildExited(f"child stdin closed: {exc}", self.diagnostics()) from exc

    def _read_line(self, deadline_s: float) -> bytes:
        try:
            line = self._lines.get(timeout=deadline_s)
        except queue.Empty:
            raise StepTimeout(
                f"no reply line within {deadline_s:.1f} s", self.diagnostics()
            ) from None
        if line is None:
            raise ChildExited(
                f"child exited with code {self.proc.poll()}", self.diagnostics()
            )
        if len(line) > MAX_LINE_BYTES:
            raise BadReply("reply line exceeds 1 MiB cap", self.diagnostics())
        return line


def spawn(
    program: HybridProgram,
    config: Any = None,
    init_timeout_s: float = DEFAULT_INIT_TIMEOUT_S,
    sandbox_root: Optional[str] = None,
) -> RuntimeHandle:
    """Start a hybrid program, send the config line, and wait for readiness."""
    t0 = time.monotonic()
    path = program.executable_path
    if not os.path.isfile(path):
        raise SpawnFailed(f"executable not found: {path}")
    if not os.access(path, os.X_OK):
        raise SpawnFailed(f"not executable: {path}")
    sandbox_dir = tempfile.mkdtemp(prefix="qistack-run-", dir=sandbox_root)
    try:
        proc = subprocess.Popen(
            [path, *program.args],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            cwd=sandbox_dir,
        )
    except OSError as exc:
        raise SpawnFailed(f"cannot start {path}: {exc}") from exc
    handle = RuntimeHandle(proc, program, sandbox_dir)
    try:
        handle._write_line(config if config is not None else {})
        line = handle._read_line(init_timeout_s)
    except StepTimeout as exc:
        terminate(handle)
        raise InitTimeout(
            f"no readiness line within {init_timeout_s:.1f} s", exc.diagnostics
        ) from None
    except ChildExited as exc:
        terminate(handle)
        raise SpawnFailed(str(exc), exc.diagnostics) from None
    try:
        ready = json.loads(line)
    except json.JSONDecodeError:
        terminate(handle)
        raise SpawnFailed(f"unparseable readiness line {line!r}", handle.diagnostics())
    if not (isinstance(ready, dict) and ready.get("ready") is True):
        terminate(handle)
        raise SpawnFailed(f"bad readiness line {ready!r}", handle.diagnostics())
    handle.state = HandleState.READY
    handle.init_duration_us = int((time.monotonic() - t0) * 1e6)
    return handle


def step(
    handle: RuntimeHandle, measurements: Optional[Histogram], deadline_s: float
) -> StepReply:
    """Exchange one measurements line for one circuit/done line."""
    if handle.state != HandleState.READY:
        raise ChildExited(f"handle not ready (state {handle.state.value})", handle.diagnostics())
    handle.state = HandleState.STEPPING
    try:
        payload = histogram_to_json(measurements) if measurements is not None else None
        handle._write_line({"measurements": payload})
        line = handle._read_line(deadline_s)
    except RuntimeError_:
        handle.state = HandleState.READY
        raise
    handle.state = HandleState.READY
    try:
        reply = json.loads(line)
    except json.JSONDecodeError as exc:
        raise BadReply(f"unparseable reply line: {exc}", handle.diagnostics()) from exc
    if not isinstance(reply, dict):
        raise BadReply(f"reply is not a JSON object: {reply!r}", handle.diagnostics())
    if reply.get("done") is True:
        return StepReply(done=True, final_payload=reply.get("final_payload"))
    circuit = reply.get("circuit")
    if not isinstance(circuit, str):
        raise BadReply(f"reply missing circuit/done field: {reply!r}", handle.diagnostics())
    return StepReply(circuit=circuit)


def terminate(handle: RuntimeHandle) -> str:
    """Best-effort, idempotent shutdown; returns captured stderr."""
    if handle.state == HandleState.TERMINATED:
        return handle.diagnostics()
    t0 = time.monotonic()
    handle.state = HandleState.TERMINATED
    try:
        handle.proc.stdin.close()
    except OSError:
        pass
    try:
        handle.proc.wait(timeout=TERMINATE_GRACE_S)
    except subprocess.TimeoutExpired:
        handle.proc.kill()
        try:
            handle.proc.wait(timeout=1.0)
        except subprocess.TimeoutExpired:
            pass
    handle._stderr_thread.join(timeout=0.5)
    handle._stdout_thread.join(timeout=0.5)
    handle.termination_duration_us = int((time.monotonic() - t0) * 1e6)
    return handle.diagnostics()


class HandlePool:
    """Concurrent-safe pool of prewarmed Ready handles, keyed by program identity."""

    def __init__(self, stale_after_s: float = 600.0):
        self._lock = threading.Lock()
        self._handles: dict[tuple, list[RuntimeHandle]] = {}
        self._closed = False
        self.stale_after_s = stale_after_s

    def put(self, handle: RuntimeHandle) -> None:
        with self._lock:
            if not self._closed:
                self._handles.setdefault(handle.program.identity, []).append(handle)
                return
        # A replenisher may race drain(); never strand its child process.
        terminate(handle)

    def take(self, program: HybridProgram) -> Optional[RuntimeHandle]:
        stale: list[RuntimeHandle] = []
        taken: Optional[RuntimeHandle] = None
        with self._lock:
            bucket = self._handles.get(program.identity, [])
            now = time.time()
            while bucket and taken is None:
                handle = bucket.pop(0)
                if now - handle.spawn_time > self.stale_after_s or handle.proc.poll() is not None:
                    stale.append(handle)
                else:
                    taken = handle
        for handle in stale:
            terminate(handle)
        return taken

    def size(self, program: Optional[HybridProgram] = None) -> int:
        with self._lock:
            if program is not None:
                return len(self._handles.get(program.identity, []))
            return sum(len(b) for b in self._handles.values())

    def drain(self) -> None:
        """Terminate every pooled handle and close the pool for good:
        late put() calls terminate their handle instead of stranding it."""
        with self._lock:
            self._closed = True
            handles = [h for b in self._handles.values() for h in b]
            self._handles.clear()
        for handle in handles:
            terminate(handle)
