"""INI-style configuration for the combined server stack."""

from __future__ import annotations

import configparser
import os
import shlex
from dataclasses import dataclass, field
from typing import Optional

from qistack import wire


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    api_port: int = 6666
    quantum_port: int = wire.DEFAULT_QUANTUM_PORT
    data_dir: str = "qistack-data"
    backend: str = "emulator-1"
    admin_secret: Optional[str] = None
    emulator_seed: int = 1234
    emulator_delay_s: float = 0.0
    poll_interval_s: float = 0.01
    eager_validate: bool = True

    scheduler_mode: str = "fifo"
    fair_use_cap: Optional[float] = None
    fair_use_window: int = 20
    reservations_enabled: bool = False

    step_deadline_s: float = 60.0
    job_timeout_default_ms: int = 300_000
    hot_pool_size: int = 0
    init_timeout_s: float = 30.0
    prewarm_executable: Optional[str] = None
    prewarm_args: tuple[str, ...] = field(default_factory=tuple)


def load_config(path: Optional[str] = None) -> ServerConfig:
    """Load server config from an INI file; QI_ADMIN_SECRET overrides the
    bootstrap admin credential."""
    cfg = ServerConfig()
    if path:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise FileNotFoundError(f"config file not found: {path}")
        server = parser["server"] if parser.has_section("server") else {}
        cfg.host = server.get("host", cfg.host)
        cfg.api_port = int(server.get("api_port", cfg.api_port))
        cfg.quantum_port = int(server.get("quantum_port", cfg.quantum_port))
        cfg.data_dir = server.get("data_dir", cfg.data_dir)
        cfg.backend = server.get("backend", cfg.backend)
        cfg.admin_secret = server.get("admin_secret", cfg.admin_secret)
        cfg.emulator_seed = int(server.get("emulator_seed", cfg.emulator_seed))
        cfg.emulator_delay_s = float(server.get("emulator_delay_s", cfg.emulator_delay_s))
        cfg.poll_interval_s = float(server.get("poll_interval_s", cfg.poll_interval_s))
        cfg.eager_validate = str(server.get("eager_validate", cfg.eager_validate)).lower() in (
            "1", "true", "yes", "on",
        )

        sched = parser["scheduler"] if parser.has_section("scheduler") else {}
        cfg.scheduler_mode = sched.get("mode", cfg.scheduler_mode)
        cap = sched.get("fair_use_cap", "")
        cfg.fair_use_cap = float(cap) if cap else None
        cfg.fair_use_window = int(sched.get("fair_use_window", cfg.fair_use_window))
        cfg.reservations_enabled = str(
            sched.get("reservations_enabled", cfg.reservations_enabled)
        ).lower() in ("1", "true", "yes", "on")

        disp = parser["dispatcher"] if parser.has_section("dispatcher") else {}
        cfg.step_deadline_s = float(disp.get("step_deadline_s", cfg.step_deadline_s))
        cfg.job_timeout_default_ms = int(
            disp.get("job_timeout_default_ms", cfg.job_timeout_default_ms)
        )
        cfg.hot_pool_size = int(disp.get("hot_pool_size", cfg.hot_pool_size))
        cfg.init_timeout_s = float(disp.get("init_timeout_s", cfg.init_timeout_s))
        cfg.prewarm_executable = disp.get("prewarm_executable", cfg.prewarm_executable) or None
        args = disp.get("prewarm_args", "")
        cfg.prewarm_args = tuple(shlex.split(args)) if args else ()

    env_secret = os.environ.get("QI_ADMIN_SECRET")
    if env_secret:
        cfg.admin_secret = env_secret
    return cfg
