from __future__ import annotations

import os
import socket
import textwrap
import threading
import time

import pytest
import uvicorn

from qistack.api import create_app
from qistack.config import ServerConfig
from qistack.service import OrchestratorService


def write_program(directory, name: str, body: str) -> str:
    """Write an executable python hybrid program and return its path."""
    path = os.path.join(str(directory), name)
    with open(path, "w", encoding="utf-8") as f:
        f.write("#!/usr/bin/env python3\n" + textwrap.dedent(body))
    os.chmod(path, 0o755)
    return path


PINGPONG_BODY = """
import json, sys
line = sys.stdin.readline()
json.loads(line)
print(json.dumps({"ready": True}), flush=True)
for line in sys.stdin:
    json.loads(line)
    print(json.dumps({"circuit": "version 1.0; qubits 2; H q[0]; measure_all"}), flush=True)
"""


def done_after_body(n: int) -> str:
    return f"""
import json, sys
json.loads(sys.stdin.readline())
print(json.dumps({{"ready": True}}), flush=True)
steps = 0
for line in sys.stdin:
    json.loads(line)
    if steps >= {n}:
        print(json.dumps({{"done": True, "final_payload": {{"iterations": steps}}}}), flush=True)
        break
    steps += 1
    print(json.dumps({{"circuit": "version 1.0; qubits 2; H q[0]; measure_all"}}), flush=True)
"""


@pytest.fixture
def pingpong_program(tmp_path):
    return write_program(tmp_path, "pingpong.py", PINGPONG_BODY)


def free_port() -> int:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class LiveServer:
    """OrchestratorService plus a real uvicorn server on an ephemeral port."""

    def __init__(self, tmp_path, **config_overrides):
        overrides = {
            "data_dir": os.path.join(str(tmp_path), "data"),
            "quantum_port": 0,
            "admin_secret": "test-admin-secret",
            "api_port": free_port(),
            "init_timeout_s": 5.0,
        }
        overrides.update(config_overrides)
        self.config = ServerConfig(**overrides)
        self.service = OrchestratorService(self.config).start()
        app = create_app(self.service)
        self._uv = uvicorn.Server(
            uvicorn.Config(app, host="127.0.0.1", port=self.config.api_port, log_level="error")
        )
        self._thread = threading.Thread(target=self._uv.run, daemon=True)
        self._thread.start()
        deadline = time.monotonic() + 10
        while not self._uv.started:
            if time.monotonic() > deadline:
                raise RuntimeError("uvicorn failed to start")
            time.sleep(0.01)
        self.url = f"http://127.0.0.1:{self.config.api_port}"

    def stop(self):
        self._uv.should_exit = True
        self._thread.join(timeout=5)
        self.service.stop()

    def create_token(self, cluster: str, user: str) -> str:
        return self.service.tokens.create(cluster, user)

    def wait_terminal(self, job_id: str, timeout_s: float = 30.0):
        deadline = time.monotonic() + timeout_s
        while time.monotonic() < deadline:
            job = self.service.manager.get(job_id)
            if job.is_terminal:
                return job
            time.sleep(0.02)
        raise TimeoutError(f"job {job_id} not terminal after {timeout_s}s")


@pytest.fixture
def live_server(tmp_path):
    server = LiveServer(tmp_path)
    yield server
    server.stop()
