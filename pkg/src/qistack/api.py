"""HTTP surface: native job routes, admin provisioning, and the
SLURM-compatible federation submission endpoint.

Native routes authenticate with ``Authorization: Bearer <secret>``; the
federation endpoint uses the ``X-SLURM-USER-NAME`` / ``X-SLURM-USER-TOKEN``
headers; admin routes use ``X-Admin-Secret`` (bootstrapped from the config
file or the QI_ADMIN_SECRET environment variable).
"""

from __future__ import annotations

import json
import os
import re
import secrets as _secrets
import stat
import uuid

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from qistack import cqasm
from qistack.dispatcher import detect_kind
from qistack.model import (
    BackendStatus,
    CircuitText,
    HybridProgram,
    Job,
    JobState,
    Origin,
    Reservation,
    job_to_json,
    new_job_id,
    payload_from_json,
    result_to_json,
)
from qistack.scheduler import (
    AlreadyTerminal,
    DuplicateId,
    Overlap,
    ReservationsDisabled,
    UnknownJob,
)
from qistack.service import OrchestratorService
from qistack.store import TokenInfo

SLURM_SUBMIT_PATH = "/slurm/v0.0.39/job/submit"

_QI_DIRECTIVE = re.compile(r"^#QI\s+payload=(.+)$", re.MULTILINE)


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=status)


async def _read_json(request: Request):
    try:
        return json.loads(await request.body())
    except (json.JSONDecodeError, UnicodeDecodeError):
        return None


def create_app(service: OrchestratorService) -> FastAPI:
    app = FastAPI(title="qistack", docs_url=None, redoc_url=None)
    config = service.config

    def authenticate(request: Request) -> TokenInfo | None:
        header = request.headers.get("authorization", "")
        if not header.startswith("Bearer "):
            return None
        return service.tokens.verify(header[len("Bearer "):])

    def is_admin(request: Request) -> bool:
        secret = request.headers.get("x-admin-secret", "")
        return bool(
            config.admin_secret and secret and _secrets.compare_digest(secret, config.admin_secret)
        )

    def build_job(body: dict, origin: Origin) -> Job | JSONResponse:
        if not isinstance(body, dict):
            return _error(400, "body must be a JSON object")
        payload_json = body.get("payload")
        if not isinstance(payload_json, dict):
            return _error(400, "missing payload")
        try:
            payload = payload_from_json(payload_json)
        except (ValueError, KeyError, TypeError) as exc:
            return _error(400, f"bad payload: {exc}")
        shots = body.get("shots", 1)
        timeout = body.get("timeout", config.job_timeout_default_ms)
        priority = body.get("priority", 0)
        if not isinstance(shots, int) or shots < 1:
            return _error(400, "shots must be an integer >= 1")
        if not isinstance(timeout, int) or timeout <= 0:
            return _error(400, "timeout must be a positive integer (ms)")
        if not isinstance(priority, int):
            return _error(400, "priority must be an integer")
        if config.eager_validate and isinstance(payload, CircuitText):
            try:
                cqasm.parse(payload.text)
            except cqasm.ParseError as exc:
                return _error(422, f"invalid circuit: {exc}")
        if isinstance(payload, HybridProgram) and not payload.executable_path:
            return _error(400, "hybrid_program.executable_path must be non-empty")
        return Job(
            id=new_job_id(),
            origin=origin,
            kind=detect_kind(payload),
            payload=payload,
            shots=shots,
            priority=priority,
            reservation_id=body.get("reservation_id"),
            timeout=timeout,
            backend=body.get("backend", config.backend),
        )

    # -- native routes ------------------------------------------------------

    @app.get("/backends")
    async def backends(request: Request):
        if authenticate(request) is None and not is_admin(request):
            return _error(401, "missing or invalid token")
        return service.manager.backends()

    @app.post("/jobs")
    async def submit_job(request: Request):
        token = authenticate(request)
        if token is None:
            return _error(401, "missing or invalid token")
        body = await _read_json(request)
        if body is None:
            return _error(400, "body is not valid JSON")
        job = build_job(body, Origin(cluster=token.cluster, user=token.user))
        if isinstance(job, JSONResponse):
            return job
        try:
            position = service.manager.enqueue(job)
        except DuplicateId:
            return _error(409, "duplicate job id")
        service.journal.record_job(job)
        return JSONResponse({"job_id": job.id, "position": position}, status_code=201)

    def _authorize_job(request: Request, job_id: str):
        token = authenticate(request)
        admin = is_admin(request)
        if token is None and not admin:
            return None, _error(401, "missing or invalid token")
        try:
            job = service.manager.get(job_id)
        except UnknownJob:
            return None, _error(404, "unknown job")
        if not admin and token.cluster != job.origin.cluster:
            return None, _error(403, "job belongs to another cluster")
        return job, None

    @app.get("/jobs/{job_id}")
    async def job_status(request: Request, job_id: str):
        job, err = _authorize_job(request, job_id)
        if err is not None:
            return err
        body = job_to_json(job)
        if job.state == JobState.QUEUED:
            body["position"] = service.manager.queue_position(job_id)
        if job.id in service.errors:
            body["error"] = service.errors[job.id]
        return body

    @app.get("/jobs/{job_id}/results")
    async def job_results(request: Request, job_id: str):
        job, err = _authorize_job(request, job_id)
        if err is not None:
            return err
        if job.state != JobState.COMPLETED:
            return _error(409, f"results not ready (state {job.state.value})")
        result = service.results.get(job_id)
        if result is None:
            return _error(409, "results unavailable (service restarted)")
        return result_to_json(result)

    @app.delete("/jobs/{job_id}")
    async def cancel_job(request: Request, job_id: str):
        job, err = _authorize_job(request, job_id)
        if err is not None:
            return err
        try:
            job = service.manager.cancel(job_id)
        except AlreadyTerminal:
            return _error(409, "job already terminal")
        service.journal.record_job(job)
        if job.state == JobState.CANCELLED:
            service.account(job)
        return {"job_id": job_id, "state": job.state.value}

    @app.get("/queue")
    async def queue(request: Request):
        if authenticate(request) is None and not is_admin(request):
            return _error(401, "missing or invalid token")
        return service.manager.queue_snapshot()

    # -- federation endpoint ------------------------------------------------

    @app.post(SLURM_SUBMIT_PATH)
    async def slurm_submit(request: Request):
        name = request.headers.get("x-slurm-user-name")
        secret = request.headers.get("x-slurm-user-token")
        if not name or not secret:
            return _error(401, "missing X-SLURM-USER-NAME or X-SLURM-USER-TOKEN header")
        token = service.tokens.verify(secret)
        if token is None or token.user != name:
            return _error(401, "invalid federation token")
        body = await _read_json(request)
        if body is None or not isinstance(body, dict):
            return _error(400, "body is not a JSON object")
        job_section = body.get("job")
        script = body.get("script")
        if not isinstance(job_section, dict) or not isinstance(script, str):
            return _error(400, "payload must contain 'job' and 'script'")
        environment = job_section.get("environment")
        if not isinstance(environment, dict) or not environment:
            return _error(400, "job.environment must be a non-empty map")

        origin = Origin(cluster=token.cluster, user=name)
        match = _QI_DIRECTIVE.search(script)
        if match:
            ref = match.group(1).strip()
            if ref.startswith("{"):
                try:
                    native = json.loads(ref)
                except json.JSONDecodeError as exc:
                    return _error(422, f"inline #QI payload is not valid JSON: {exc}")
            else:
                if not os.path.isfile(ref):
                    return _error(422, f"#QI payload file not found: {ref}")
                with open(ref, "r", encoding="utf-8") as f:
                    try:
                        native = json.load(f)
                    except json.JSONDecodeError as exc:
                        return _error(422, f"#QI payload file is not valid JSON: {exc}")
            job = build_job(native, origin)
            if isinstance(job, JSONResponse):
                return job
        else:
            # No directive: run the whole batch script as a hybrid program.
            scripts_dir = os.path.join(config.data_dir, "scripts")
            os.makedirs(scripts_dir, exist_ok=True)
            script_path = os.path.join(scripts_dir, f"{uuid.uuid4()}.sh")
            with open(script_path, "w", encoding="utf-8") as f:
                f.write(script)
            os.chmod(script_path, os.stat(script_path).st_mode | stat.S_IXUSR)
            job = Job(
                id=new_job_id(),
                origin=origin,
                kind=detect_kind(HybridProgram(executable_path=script_path)),
                payload=HybridProgram(executable_path=script_path, max_iterations=1),
                shots=1,
                timeout=config.job_timeout_default_ms,
                backend=config.backend,
            )
        try:
            service.manager.enqueue(job)
        except DuplicateId:
            return _error(409, "duplicate job id")
        service.journal.record_job(job)
        return {"job_id": job.id, "errors": []}

    # -- admin routes -------------------------------------------------------

    @app.post("/tokens")
    async def create_token(request: Request):
        if not is_admin(request):
            return _error(401, "admin credential required")
        body = await _read_json(request)
        if not isinstance(body, dict) or "cluster" not in body or "user" not in body:
            return _error(400, "body must contain cluster and user")
        try:
            secret = service.tokens.create(body["cluster"], body["user"])
        except ValueError as exc:
            return _error(409, str(exc))
        return JSONResponse({"cluster": body["cluster"], "secret": secret}, status_code=201)

    @app.post("/backends/{backend}/status")
    async def set_status(request: Request, backend: str):
        if not is_admin(request):
            return _error(401, "admin credential required")
        body = await _read_json(request)
        if not isinstance(body, dict) or "status" not in body:
            return _error(400, "body must contain status")
        try:
            status = BackendStatus(body["status"])
        except ValueError:
            return _error(400, f"unknown status {body['status']!r}")
        service.manager.set_backend_status(backend, status)
        return {"backend": backend, "status": status.value}

    @app.post("/backends/{backend}/prewarm")
    async def prewarm(request: Request, backend: str):
        if not is_admin(request):
            return _error(401, "admin credential required")
        body = await _read_json(request)
        if not isinstance(body, dict) or "executable_path" not in body:
            return _error(400, "body must contain executable_path")
        program = HybridProgram(
            executable_path=body["executable_path"],
            args=tuple(body.get("args", ())),
            max_iterations=1,
        )
        warmed = service.dispatcher.prewarm(program, int(body.get("n", 1)))
        return {"warmed": warmed}

    @app.post("/reservations")
    async def add_reservation(request: Request):
        if not is_admin(request):
            return _error(401, "admin credential required")
        body = await _read_json(request)
        if not isinstance(body, dict):
            return _error(400, "body must be a JSON object")
        try:
            reservation = Reservation(
                id=body.get("id") or str(uuid.uuid4()),
                holder=Origin(cluster=body["holder"]["cluster"], user=body["holder"]["user"]),
                backend=body.get("backend", config.backend),
                start=body["start"],
                end=body["end"],
            )
        except (KeyError, TypeError, ValueError) as exc:
            return _error(400, f"bad reservation: {exc}")
        try:
            service.manager.add_reservation(reservation)
        except Overlap as exc:
            return _error(409, str(exc))
        except ReservationsDisabled as exc:
            return _error(409, str(exc))
        return JSONResponse({"id": reservation.id}, status_code=201)

    return app
