"""Single-file embedded storage: a JSON-lines journal for jobs and tokens
(compacted on startup) and a separate append-only accounting ledger.

The journal uses a single-writer append discipline; records are full
snapshots, last-write-wins on replay. The accounting ledger is never
rewritten, only appended.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import secrets
import threading
import time
from dataclasses import dataclass
from typing import Optional

from qistack.model import AccountingRecord, Job, accounting_to_json, job_from_json, job_to_json


class Journal:
    """Write-ahead JSON-lines journal for jobs and tokens."""

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()
        self.jobs: dict[str, dict] = {}
        self.tokens: dict[str, dict] = {}
        self._load_and_compact()

    def _load_and_compact(self) -> None:
        if os.path.exists(self.path):
            with open(self.path, "r", encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if not line:
                        continue
                    event = json.loads(line)
                    if event["type"] == "job":
                        self.jobs[event["job"]["id"]] = event["job"]
                    elif event["type"] == "token":
                        self.tokens[event["token"]["id"]] = event["token"]
        tmp = self.path + ".compact"
        with open(tmp, "w", encoding="utf-8") as f:
            for job in self.jobs.values():
                f.write(json.dumps({"type": "job", "job": job}, separators=(",", ":")) + "\n")
            for token in self.tokens.values():
                f.write(json.dumps({"type": "token", "token": token}, separators=(",", ":")) + "\n")
        os.replace(tmp, self.path)

    def _append(self, event: dict) -> None:
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps(event, separators=(",", ":")) + "\n")
                f.flush()

    def record_job(self, job: Job) -> None:
        snapshot = job_to_json(job)
        with self._lock:
            self.jobs[job.id] = snapshot
        self._append({"type": "job", "job": snapshot})

    def record_token(self, token: dict) -> None:
        with self._lock:
            self.tokens[token["id"]] = token
        self._append({"type": "token", "token": token})

    def load_jobs(self) -> list[Job]:
        return [job_from_json(d) for d in self.jobs.values()]


class AccountingLedger:
    """Append-only newline-delimited JSON usage ledger."""

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()

    def append(self, record: AccountingRecord) -> None:
        line = json.dumps(accounting_to_json(record), separators=(",", ":")) + "\n"
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(line)
                f.flush()

    def read_all(self) -> list[dict]:
        if not os.path.exists(self.path):
            return []
        with open(self.path, "r", encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]


@dataclass
class TokenInfo:
    id: str
    cluster: str
    user: str


class TokenStore:
    """Salted-hash token storage; the plain secret is shown exactly once."""

    def __init__(self, journal: Journal):
        self._journal = journal
        self._lock = threading.Lock()

    @staticmethod
    def _hash(salt: str, secret: str) -> str:
        return hashlib.sha256((salt + secret).encode("utf-8")).hexdigest()

    def create(self, cluster: str, user: str) -> str:
        """Provision a token; raises ValueError if the cluster already has an
        active one (one per participating cluster)."""
        with self._lock:
            for token in self._journal.tokens.values():
                if token["cluster"] == cluster and not token["revoked"]:
                    raise ValueError(f"cluster {cluster!r} already has an active token")
            secret = base64.urlsafe_b64encode(secrets.token_bytes(32)).decode("ascii")
            salt = secrets.token_hex(16)
            record = {
                "id": secrets.token_hex(8),
                "cluster": cluster,
                "user": user,
                "salt": salt,
                "hash": self._hash(salt, secret),
                "created_at": int(time.time() * 1000),
                "revoked": False,
            }
            self._journal.record_token(record)
            return secret

    def verify(self, secret: str) -> Optional[TokenInfo]:
        if not secret:
            return None
        for token in self._journal.tokens.values():
            if token["revoked"]:
                continue
            if secrets.compare_digest(self._hash(token["salt"], secret), token["hash"]):
                return TokenInfo(id=token["id"], cluster=token["cluster"], user=token["user"])
        return None

    def revoke(self, cluster: str) -> bool:
        with self._lock:
            changed = False
            for token in list(self._journal.tokens.values()):
                if token["cluster"] == cluster and not token["revoked"]:
                    updated = dict(token, revoked=True)
                    self._journal.record_token(updated)
                    changed = True
            return changed
