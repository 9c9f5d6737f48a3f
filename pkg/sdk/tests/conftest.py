"""SDK test harness: boots a real orchestration server through the primary
package's CLI (an external interface), never through its internals."""

from __future__ import annotations

import os
import socket
import subprocess
import sys
import time

import httpx
import pytest

ADMIN_SECRET = "sdk-test-admin-secret"


def free_port() -> int:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class ServerProcess:
    def __init__(self, tmp_path):
        self.port = free_port()
        self.url = f"http://127.0.0.1:{self.port}"
        config_path = os.path.join(str(tmp_path), "server.ini")
        with open(config_path, "w", encoding="utf-8") as f:
            f.write(
                "[server]\n"
                f"api_port = {self.port}\n"
                "quantum_port = 0\n"
                f"data_dir = {os.path.join(str(tmp_path), 'data')}\n"
                "[dispatcher]\n"
                "init_timeout_s = 10\n"
            )
        env = dict(os.environ, QI_ADMIN_SECRET=ADMIN_SECRET)
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "qistack.cli", "serve", config_path],
            stdout=subprocess.DEVNULL,
            stderr=subprocess.DEVNULL,
            env=env,
        )
        deadline = time.monotonic() + 30
        while True:
            try:
                httpx.get(self.url + "/backends", timeout=1)
                break
            except httpx.HTTPError:
                if self.proc.poll() is not None:
                    raise RuntimeError("server process exited during startup")
                if time.monotonic() > deadline:
                    self.proc.kill()
                    raise RuntimeError("server did not come up within 30s")
                time.sleep(0.05)

    def create_token(self, cluster: str, user: str) -> str:
        r = httpx.post(
            self.url + "/tokens",
            json={"cluster": cluster, "user": user},
            headers={"X-Admin-Secret": ADMIN_SECRET},
            timeout=10,
        )
        r.raise_for_status()
        return r.json()["secret"]

    def stop(self) -> None:
        self.proc.terminate()
        try:
            self.proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            self.proc.kill()


@pytest.fixture(scope="module")
def server(tmp_path_factory):
    srv = ServerProcess(tmp_path_factory.mktemp("sdk-server"))
    yield srv
    srv.stop()


@pytest.fixture(scope="module")
def token(server):
    return server.create_token("sdk-tests", "alice")
