"""Blocking HTTP client for the orchestration server's REST API.

One in-flight request per client instance; instances are not meant to be
shared across threads. Only idempotent GETs are retried.
"""

from __future__ import annotations

import time
from typing import Any, Optional

import httpx

TERMINAL_STATES = frozenset({"completed", "failed", "timed_out", "cancelled"})

_GET_RETRIES = 3
_RETRY_BACKOFF_S = 0.2


class SdkError(Exception):
    """Base class for all client-side errors."""


class ServerUnreachable(SdkError):
    pass


class AuthError(SdkError):
    """401/403: missing, invalid, or insufficient credentials."""


class NotFound(SdkError):
    pass


class ClientError(SdkError):
    """Any other server-reported 4xx/5xx; carries the HTTP status."""

    def __init__(self, status_code: int, message: str):
        super().__init__(message)
        self.status_code = status_code


class JobFailed(SdkError):
    """wait() observed a terminal state other than completed."""

    def __init__(self, job_id: str, state: str, error: Optional[dict] = None):
        detail = f": {error.get('message')}" if error else ""
        super().__init__(f"job {job_id} ended in state {state}{detail}")
        self.job_id = job_id
        self.state = state
        self.error = error


class WaitTimeout(SdkError):
    pass


class Client:
    def __init__(self, base_url: str, token: str, user: Optional[str] = None, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.user = user
        self._http = httpx.Client(
            base_url=self.base_url,
            headers={"Authorization": f"Bearer {token}"},
            timeout=timeout,
        )

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> "Client":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- transport ----------------------------------------------------------

    def _request(self, method: str, path: str, json_body: Any = None) -> Any:
        attempts = _GET_RETRIES if method == "GET" else 1
        last_exc: Optional[Exception] = None
        for attempt in range(attempts):
            try:
                response = self._http.request(method, path, json=json_body)
                break
            except httpx.HTTPError as exc:
                last_exc = exc
                if attempt + 1 < attempts:
                    time.sleep(_RETRY_BACKOFF_S * (attempt + 1))
        else:
            raise ServerUnreachable(f"{method} {path}: {last_exc}") from last_exc
        if response.status_code in (401, 403):
            raise AuthError(self._message(response))
        if response.status_code == 404:
            raise NotFound(self._message(response))
        if response.status_code >= 400:
            raise ClientError(response.status_code, self._message(response))
        return response.json()

    @staticmethod
    def _message(response: httpx.Response) -> str:
        try:
            return response.json().get("error", response.text)
        except Exception:
            return response.text or f"HTTP {response.status_code}"

    # -- operations ---------------------------------------------------------

    def submit_circuit(
        self,
        text: str,
        shots: int,
        priority: int = 0,
        timeout_ms: Optional[int] = None,
    ) -> str:
        body: dict[str, Any] = {
            "payload": {"circuit_text": text},
            "shots": shots,
            "priority": priority,
        }
        if timeout_ms is not None:
            body["timeout"] = timeout_ms
        return self._request("POST", "/jobs", body)["job_id"]

    def submit_hybrid(
        self,
        executable_path: str,
        args: tuple[str, ...] = (),
        max_iterations: int = 10,
        shots: int = 1024,
        timeout_ms: Optional[int] = None,
    ) -> str:
        body: dict[str, Any] = {
            "payload": {
                "hybrid_program": {
                    "executable_path": executable_path,
                    "args": list(args),
                    "max_iterations": max_iterations,
                }
            },
            "shots": shots,
        }
        if timeout_ms is not None:
            body["timeout"] = timeout_ms
        return self._request("POST", "/jobs", body)["job_id"]

    def status(self, job_id: str) -> dict:
        return self._request("GET", f"/jobs/{job_id}")

    def results(self, job_id: str) -> dict:
        """The completed job's result document (histograms, payload, latency)."""
        return self._request("GET", f"/jobs/{job_id}/results")

    def wait(self, job_id: str, poll_interval: float = 0.05, timeout: float = 300.0) -> dict:
        """Poll until terminal; returns results for completed jobs, raises
        JobFailed otherwise."""
        deadline = time.monotonic() + timeout
        while True:
            job = self.status(job_id)
            state = job["state"]
            if state == "completed":
                return self.results(job_id)
            if state in TERMINAL_STATES:
                raise JobFailed(job_id, state, job.get("error"))
            if time.monotonic() >= deadline:
                raise WaitTimeout(f"job {job_id} still {state} after {timeout:.0f}s")
            time.sleep(poll_interval)

    def backends(self) -> list[dict]:
        return self._request("GET", "/backends")

    def queue(self) -> list[dict]:
        return self._request("GET", "/queue")

    def cancel(self, job_id: str) -> dict:
        return self._request("DELETE", f"/jobs/{job_id}")
