"""Operator and federation command-line tool.

Exit codes: 0 ok, 2 usage, 3 auth, 4 client error, 5 network/server
unreachable.
"""

from __future__ import annotations

import json
import socket
import statistics
import sys
import time
import uuid

import click
import httpx

EXIT_AUTH = 3
EXIT_CLIENT = 4
EXIT_NETWORK = 5


class CliError(click.ClickException):
    def __init__(self, message: str, exit_code: int):
        super().__init__(message)
        self.exit_code = exit_code


def _request(ctx: dict, method: str, path: str, json_body=None, headers=None) -> httpx.Response:
    url = ctx["url"].rstrip("/") + path
    merged = {}
    if ctx.get("token"):
        merged["Authorization"] = f"Bearer {ctx['token']}"
    if ctx.get("admin_secret"):
        merged["X-Admin-Secret"] = ctx["admin_secret"]
    if headers:
        merged.update(headers)
    try:
        response = httpx.request(method, url, json=json_body, headers=merged, timeout=30.0)
    except httpx.HTTPError as exc:
        raise CliError(f"cannot reach server: {exc}", EXIT_NETWORK)
    if response.status_code in (401, 403):
        raise CliError(_message(response), EXIT_AUTH)
    if response.status_code >= 400:
        raise CliError(_message(response), EXIT_CLIENT)
    return response


def _message(response: httpx.Response) -> str:
    try:
        return response.json().get("error", response.text)
    except Exception:
        return response.text or f"HTTP {response.status_code}"


def _emit(ctx: dict, data, table_lines=None) -> None:
    if ctx["format"] == "json":
        click.echo(json.dumps(data, indent=2))
    elif table_lines is not None:
        for line in table_lines:
            click.echo(line)
    else:
        click.echo(json.dumps(data, indent=2))


@click.group()
@click.option("--url", envvar="QI_URL", default="http://127.0.0.1:6666", show_default=True)
@click.option("--token", envvar="QI_TOKEN", default=None, help="API token for remote commands.")
@click.option("--admin-secret", envvar="QI_ADMIN_SECRET", default=None)
@click.option("--config", "config_path", envvar="QI_CONFIG", default=None,
              help="Server config file (serve, defaults for other commands).")
@click.option("--format", "output_format", type=click.Choice(["json", "table"]), default="table")
@click.pass_context
def main(ctx, url, token, admin_secret, config_path, output_format):
    """Hybrid quantum/HPC orchestration: server, federation client, benchmark."""
    ctx.obj = {
        "url": url,
        "token": token,
        "admin_secret": admin_secret,
        "config_path": config_path,
        "format": output_format,
    }


@main.command()
@click.argument("config_path", required=False)
@click.pass_obj
def serve(ctx, config_path):
    """Run the full server stack (REST API, scheduler, dispatcher, emulator)."""
    import uvicorn

    from qistack.api import create_app
    from qistack.config import load_config
    from qistack.service import OrchestratorService

    config = load_config(config_path or ctx.get("config_path"))
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((config.host, config.api_port))
    except OSError as exc:
        raise CliError(f"API port {config.api_port} unavailable: {exc}", 1)
    finally:
        probe.close()

    service = OrchestratorService(config).start()
    app = create_app(service)
    click.echo(
        f"qistack ready: api={config.host}:{config.api_port} "
        f"quantum={service.quantum.host}:{service.quantum.port} backend={config.backend}"
    )
    try:
        uvicorn.run(app, host=config.host, port=config.api_port, log_level="warning")
    finally:
        service.stop()


@main.command("submit-slurm")
@click.argument("job_json_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--user", envvar="QI_USER", required=True, help="X-SLURM-USER-NAME value.")
@click.pass_obj
def submit_slurm(ctx, job_json_path, user):
    """Submit a SLURM-style payload file with X-SLURM headers (the C1 role)."""
    with open(job_json_path, "r", encoding="utf-8") as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as exc:
            raise CliError(f"not valid JSON: {exc}", EXIT_CLIENT)
    if not ctx.get("token"):
        raise CliError("a token is required (--token or QI_TOKEN)", EXIT_AUTH)
    response = _request(
        ctx,
        "POST",
        "/slurm/v0.0.39/job/submit",
        json_body=payload,
        headers={"X-SLURM-USER-NAME": user, "X-SLURM-USER-TOKEN": ctx["token"]},
    )
    body = response.json()
    _emit(ctx, body, [body["job_id"]])


@main.command()
@click.argument("circuit_file", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("--hybrid", "hybrid_path", default=None, help="Hybrid program executable path.")
@click.option("--arg", "hybrid_args", multiple=True, help="Argument for the hybrid program.")
@click.option("--max-iterations", default=10, show_default=True)
@click.option("--shots", default=1024, show_default=True)
@click.option("--priority", default=0)
@click.option("--timeout", default=None, type=int, help="Job timeout in ms.")
@click.pass_obj
def submit(ctx, circuit_file, hybrid_path, hybrid_args, max_iterations, shots, priority, timeout):
    """Submit a circuit file (pure quantum) or a hybrid program."""
    if (circuit_file is None) == (hybrid_path is None):
        raise CliError("provide exactly one of CIRCUIT_FILE or --hybrid", 2)
    if circuit_file is not None:
        with open(circuit_file, "r", encoding="utf-8") as f:
            payload = {"circuit_text": f.read()}
    else:
        payload = {
            "hybrid_program": {
                "executable_path": hybrid_path,
                "args": list(hybrid_args),
                "max_iterations": max_iterations,
            }
        }
    body = {"payload": payload, "shots": shots, "priority": priority}
    if timeout is not None:
        body["timeout"] = timeout
    response = _request(ctx, "POST", "/jobs", json_body=body)
    data = response.json()
    _emit(ctx, data, [f"job_id: {data['job_id']}", f"position: {data['position']}"])


@main.command()
@click.argument("job_id")
@click.pass_obj
def status(ctx, job_id):
    """Show a job's state, position, and timestamps."""
    data = _request(ctx, "GET", f"/jobs/{job_id}").json()
    lines = [f"state: {data['state']}"]
    if data.get("position") is not None:
        lines.append(f"position: {data['position']}")
    _emit(ctx, data, lines)


@main.command()
@click.argument("job_id")
@click.pass_obj
def results(ctx, job_id):
    """Fetch a completed job's histograms and latency report."""
    data = _request(ctx, "GET", f"/jobs/{job_id}/results").json()
    lines = [f"iterations: {data['iterations']}"]
    for i, histogram in enumerate(data["histograms"]):
        for key in sorted(histogram["counts"]):
            lines.append(f"  [{i}] {key}: {histogram['counts'][key]}")
    _emit(ctx, data, lines)


@main.command()
@click.pass_obj
def queue(ctx):
    """Print the queue with positions (transparency view)."""
    data = _request(ctx, "GET", "/queue").json()
    lines = [
        f"{row['position']:>3}  {row['job_id']}  prio={row['priority']}  "
        f"{row['origin']['cluster']}/{row['origin']['user']}"
        for row in data
    ]
    _emit(ctx, data, lines or ["(queue empty)"])


@main.command()
@click.argument("job_id")
@click.pass_obj
def cancel(ctx, job_id):
    """Cancel a queued or running job."""
    data = _request(ctx, "DELETE", f"/jobs/{job_id}").json()
    _emit(ctx, data, [f"state: {data['state']}"])


@main.command("create-token")
@click.argument("cluster")
@click.argument("user")
@click.pass_obj
def create_token(ctx, cluster, user):
    """Provision a federation token (admin); the secret is shown once."""
    data = _request(ctx, "POST", "/tokens", json_body={"cluster": cluster, "user": user}).json()
    _emit(ctx, data, [data["secret"]])


@main.command("add-reservation")
@click.argument("cluster")
@click.argument("user")
@click.argument("start", type=int)
@click.argument("end", type=int)
@click.option("--backend", default=None)
@click.pass_obj
def add_reservation(ctx, cluster, user, start, end, backend):
    """Reserve the backend for one origin over [start, end) ms epochs (admin)."""
    body = {"holder": {"cluster": cluster, "user": user}, "start": start, "end": end}
    if backend:
        body["backend"] = backend
    data = _request(ctx, "POST", "/reservations", json_body=body).json()
    _emit(ctx, data, [data["id"]])


@main.command("set-backend-status")
@click.argument("backend")
@click.argument("status", type=click.Choice(["idle", "executing", "calibrating", "offline"]))
@click.pass_obj
def set_backend_status(ctx, backend, status):
    """Set a backend's coarse availability status (admin)."""
    data = _request(ctx, "POST", f"/backends/{backend}/status", json_body={"status": status}).json()
    _emit(ctx, data, [f"{data['backend']}: {data['status']}"])


@main.command("bench-latency")
@click.option("--iterations", default=100, show_default=True)
@click.option("--hot/--cold", default=False, help="Prewarm the classical runtime first.")
@click.option("--shots", default=32, show_default=True)
@click.pass_obj
def bench_latency(ctx, iterations, hot, shots):
    """Run a no-op ping-pong job and report init/per-step/termination stats."""
    program_args = ["-m", "qistack.programs.pingpong"]
    if hot:
        _request(
            ctx,
            "POST",
            "/backends/emulator-1/prewarm",
            json_body={"executable_path": sys.executable, "args": program_args, "n": 1},
        )
    else:
        # unique tag forces a hot-pool miss (pool is keyed by path+args)
        program_args = program_args + [f"--cold={uuid.uuid4()}"]
    body = {
        "payload": {
            "hybrid_program": {
                "executable_path": sys.executable,
                "args": program_args,
                "max_iterations": iterations,
            }
        },
        "shots": shots,
        "timeout": 600_000,
    }
    job_id = _request(ctx, "POST", "/jobs", json_body=body).json()["job_id"]
    deadline = time.monotonic() + 600
    while time.monotonic() < deadline:
        state = _request(ctx, "GET", f"/jobs/{job_id}").json()["state"]
        if state in ("completed", "failed", "timed_out", "cancelled"):
            break
        time.sleep(0.05)
    if state != "completed":
        raise CliError(f"benchmark job ended in state {state}", 1)
    latency = _request(ctx, "GET", f"/jobs/{job_id}/results").json()["latency"]
    steps = latency["per_step_execution"]
    summary = {
        "mode": "hot" if hot else "cold",
        "iterations": len(steps),
        "initialization_us": latency["initialization"],
        "per_step_median_us": int(statistics.median(steps)) if steps else 0,
        "per_step_p95_us": int(sorted(steps)[max(0, int(len(steps) * 0.95) - 1)]) if steps else 0,
        "termination_us": latency["termination"],
    }
    _emit(
        ctx,
        summary,
        [
            f"mode:            {summary['mode']}",
            f"initialization:  {summary['initialization_us']} us",
            f"per-step median: {summary['per_step_median_us']} us",
            f"per-step p95:    {summary['per_step_p95_us']} us",
            f"termination:     {summary['termination_us']} us",
        ],
    )


if __name__ == "__main__":
    main()
