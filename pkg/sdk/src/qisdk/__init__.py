"""Thin client layer over the qistack REST API plus helpers for authoring
hybrid programs against the stdio contract."""

from qisdk.client import (
    AuthError,
    Client,
    ClientError,
    JobFailed,
    NotFound,
    SdkError,
    ServerUnreachable,
    WaitTimeout,
)
from qisdk.hybrid import Done, run_hybrid_loop

__all__ = [
    "AuthError",
    "Client",
    "ClientError",
    "Done",
    "JobFailed",
    "NotFound",
    "SdkError",
    "ServerUnreachable",
    "WaitTimeout",
    "run_hybrid_loop",
]
