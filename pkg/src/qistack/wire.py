"""Framed request/reply messaging between the dispatcher and the runtimes.

Wire format, bit-exact: ``[u32 big-endian body length][UTF-8 JSON body]``.
Every body is a JSON object with a snake_case string field ``"type"``. Each
request elicits exactly one reply on the same connection before the next
request may be sent (strict alternation).
"""

from __future__ import annotations

import json
import select
import socket
import struct
import threading
import time
from dataclasses import dataclass
from typing import Any, Callable, Optional

from qistack.model import Histogram, histogram_from_json, histogram_to_json

MAX_FRAME_BYTES = 16 * 1024 * 1024

DEFAULT_QUANTUM_PORT = 5556
DEFAULT_CLASSICAL_PORT = 5557


class WireError(Exception):
    pass


class Oversize(WireError):
    """Encoded body exceeds the 16 MiB frame cap."""


class Timeout(WireError):
    """No reply within the caller's deadline."""


class ProtocolViolation(WireError):
    """Strict alternation breached or unexpected reply type."""


class ConnectionLost(WireError):
    pass


class BadFrame(WireError):
    """Malformed frame received (undecodable length, JSON, or type)."""


# ---------------------------------------------------------------------------
# Messages
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InitRequest:
    TYPE = "init_request"
    job_id: str
    config: Any = None


@dataclass(frozen=True)
class InitReply:
    TYPE = "init_reply"
    ok: bool
    error: Optional[str] = None


@dataclass(frozen=True)
class ClassicalStepRequest:
    TYPE = "classical_step_request"
    measurements: Optional[Histogram] = None


@dataclass(frozen=True)
class ClassicalStepReply:
    TYPE = "classical_step_reply"
    circuit: Optional[str] = None
    done: bool = False
    final_payload: Any = None


@dataclass(frozen=True)
class QuantumExecuteRequest:
    TYPE = "quantum_execute_request"
    circuit: str = ""
    shots: int = 1


@dataclass(frozen=True)
class QuantumExecuteReply:
    TYPE = "quantum_execute_reply"
    histogram: Histogram = None  # type: ignore[assignment]


@dataclass(frozen=True)
class TerminateRequest:
    TYPE = "terminate_request"


@dataclass(frozen=True)
class TerminateReply:
    TYPE = "terminate_reply"


@dataclass(frozen=True)
class ErrorReply:
    TYPE = "error_reply"
    code: str = ""
    message: str = ""


ProtocolMessage = (
    InitRequest
    | InitReply
    | ClassicalStepRequest
    | ClassicalStepReply
    | QuantumExecuteRequest
    | QuantumExecuteReply
    | TerminateRequest
    | TerminateReply
    | ErrorReply
)


def _to_body(msg: ProtocolMessage) -> dict:
    body: dict[str, Any] = {"type": msg.TYPE}
    if isinstance(msg, InitRequest):
        body["job_id"] = msg.job_id
        body["config"] = msg.config
    elif isinstance(msg, InitReply):
        body["ok"] = msg.ok
        if msg.error is not None:
            body["error"] = msg.error
    elif isinstance(msg, ClassicalStepRequest):
        body["measurements"] = (
            histogram_to_json(msg.measurements) if msg.measurements is not None else None
        )
    elif isinstance(msg, ClassicalStepReply):
        if msg.done:
            body["done"] = True
            body["final_payload"] = msg.final_payload
        else:
            body["circuit"] = msg.circuit
    elif isinstance(msg, QuantumExecuteRequest):
        body["circuit"] = msg.circuit
        body["shots"] = msg.shots
    elif isinstance(msg, QuantumExecuteReply):
        body["histogram"] = histogram_to_json(msg.histogram)
    elif isinstance(msg, ErrorReply):
        body["code"] = msg.code
        body["message"] = msg.message
    return body


def _from_body(body: dict) -> ProtocolMessage:
    if not isinstance(body, dict) or not isinstance(body.get("type"), str):
        raise BadFrame("frame body must be a JSON object with a string 'type'")
    mtype = body["type"]
    try:
        if mtype == "init_request":
            return InitRequest(job_id=body["job_id"], config=body.get("config"))
        if mtype == "init_reply":
            return InitReply(ok=body["ok"], error=body.get("error"))
        if mtype == "classical_step_request":
            m = body.get("measurements")
            return ClassicalStepRequest(
                measurements=histogram_from_json(m) if m is not None else None
            )
        if mtype == "classical_step_reply":
            if body.get("done"):
                return ClassicalStepReply(done=True, final_payload=body.get("final_payload"))
            return ClassicalStepReply(circuit=body["circuit"])
        if mtype == "quantum_execute_request":
            return QuantumExecuteRequest(circuit=body["circuit"], shots=body["shots"])
        if mtype == "quantum_execute_reply":
            return QuantumExecuteReply(histogram=histogram_from_json(body["histogram"]))
        if mtype == "terminate_request":
            return TerminateRequest()
        if mtype == "terminate_reply":
            return TerminateReply()
        if mtype == "error_reply":
            return ErrorReply(code=body.get("code", ""), message=body.get("message", ""))
    except (KeyError, TypeError) as exc:
        raise BadFrame(f"malformed {mtype} body: {exc}") from exc
    raise BadFrame(f"unknown message type {mtype!r}")


def encode_frame(msg: ProtocolMessage) -> bytes:
    body = json.dumps(_to_body(msg), separators=(",", ":")).encode("utf-8")
    if len(body) > MAX_FRAME_BYTES:
        raise Oversize(f"frame body is {len(body)} bytes, cap is {MAX_FRAME_BYTES}")
    return struct.pack(">I", len(body)) + body


def decode_frame(data: bytes) -> ProtocolMessage:
    """Decode one complete frame; inverse of encode_frame."""
    if len(data) < 4:
        raise BadFrame("frame shorter than length prefix")
    (length,) = struct.unpack(">I", data[:4])
    if length > MAX_FRAME_BYTES:
        raise Oversize(f"declared body length {length} exceeds cap")
    if len(data) != 4 + length:
        raise BadFrame(f"frame length mismatch: declared {length}, got {len(data) - 4}")
    try:
        body = json.loads(data[4:].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BadFrame(f"undecodable frame body: {exc}") from exc
    return _from_body(body)


def _recv_exact(sock: socket.socket, n: int, deadline: Optional[float]) -> bytes:
    buf = b""
    while len(buf) < n:
        if deadline is not None:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise Timeout("deadline exceeded while waiting for frame")
            sock.settimeout(remaining)
        try:
            chunk = sock.recv(n - len(buf))
        except socket.timeout:
            raise Timeout("deadline exceeded while waiting for frame")
        except OSError as exc:
            raise ConnectionLost(str(exc)) from exc
        if not chunk:
            raise ConnectionLost("peer closed the connection")
        buf += chunk
    return buf


def read_message(sock: socket.socket, deadline: Optional[float] = None) -> ProtocolMessage:
    header = _recv_exact(sock, 4, deadline)
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME_BYTES:
        raise BadFrame(f"declared body length {length} exceeds cap")
    body = _recv_exact(sock, length, deadline)
    return decode_frame(header + body)


class Connection:
    """Client side of one request/reply link; confined to one owner at a time."""

    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._awaiting_reply = False
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    @classmethod
    def connect(cls, host: str, port: int, timeout: float = 10.0) -> "Connection":
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise ConnectionLost(f"cannot connect to {host}:{port}: {exc}") from exc
        return cls(sock)

    def _pending_bytes(self) -> bool:
        try:
            readable, _, _ = select.select([self._sock], [], [], 0)
            if not readable:
                return False
            # readable can also mean EOF; only buffered data is a violation
            return bool(self._sock.recv(1, socket.MSG_PEEK | socket.MSG_DONTWAIT))
        except (BlockingIOError, OSError):
            return False

    def request(self, msg: ProtocolMessage, deadline_s: float) -> ProtocolMessage:
        """Send one request and return its single reply.

        Raises ProtocolViolation if a frame is already pending before the send
        or another frame trails the reply (alternation breach), Timeout past
        the deadline, ConnectionLost on a dead peer.
        """
        if self._awaiting_reply:
            raise ProtocolViolation("previous request has no reply yet")
        if self._pending_bytes():
            raise ProtocolViolation("unsolicited frame pending before request")
        frame = encode_frame(msg)
        self._awaiting_reply = True
        try:
            self._sock.sendall(frame)
        except OSError as exc:
            raise ConnectionLost(str(exc)) from exc
        deadline = time.monotonic() + deadline_s
        reply = read_message(self._sock, deadline)
        self._awaiting_reply = False
        if self._pending_bytes():
            raise ProtocolViolation("more than one reply frame for a single request")
        return reply

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass

    def __enter__(self) -> "Connection":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


Handler = Callable[[ProtocolMessage], ProtocolMessage]


def _serve_connection(conn: socket.socket, handler: Handler) -> None:
    conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    try:
        while True:
            try:
                request = read_message(conn)
            except ConnectionLost:
                return
            except (BadFrame, Oversize) as exc:
                conn.sendall(encode_frame(ErrorReply(code="bad_frame", message=str(exc))))
                return
            try:
                reply = handler(request)
            except Exception as exc:  # handler fault: report and drop the link
                conn.sendall(encode_frame(ErrorReply(code="internal", message=str(exc))))
                return
            conn.sendall(encode_frame(reply))
    except OSError:
        pass
    finally:
        try:
            conn.close()
        except OSError:
            pass


class WireServer:
    """Accept loop serving one-request-in-flight connections concurrently."""

    def __init__(self, handler: Handler, host: str = "127.0.0.1", port: int = 0):
        self._handler = handler
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((host, port))
        self._listener.listen(16)
        self.host, self.port = self._listener.getsockname()
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def start(self) -> "WireServer":
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._thread.start()
        return self

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                readable, _, _ = select.select([self._listener], [], [], 0.1)
            except OSError:
                return
            if not readable:
                continue
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            threading.Thread(
                target=_serve_connection, args=(conn, self._handler), daemon=True
            ).start()

    def stop(self) -> None:
        self._stop.set()
        try:
            self._listener.close()
        except OSError:
            pass
        if self._thread is not None:
            self._thread.join(timeout=2)

    def __enter__(self) -> "WireServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
