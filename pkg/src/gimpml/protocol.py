"""Framed TCP wire protocol for delegating tasks to an inference backend.

Frame layout (all integers little-endian):

    request  := "GML1" | u8 task id | u8 device (0 auto, 1 force-cpu)
              | u16 param count | { u16 key length | key utf-8 | f64 value }*
              | u16 tensor count | tensor*
    tensor   := u8 dtype (0 = f32) | u8 rank | u32 dim * rank
              | payload (f32, planar channel-major)
    response := "GML1" | u8 status (0 ok, 1 task error, 2 transport refused)
              | ok:    u16 tensor count | tensor*
              | error: u32 message length | message utf-8

One request per frame; responses come back in request order.
"""

from __future__ import annotations

import logging
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass
from typing import BinaryIO, Sequence

import numpy as np

from .backend import (
    Backend,
    DevicePolicy,
    TaskError,
    TaskKind,
    TaskRequest,
    TaskResponse,
    TransportError,
    resolve_device,
)
from .core import Tensor

__all__ = [
    "MAGIC",
    "STATUS_OK",
    "STATUS_TASK_ERROR",
    "STATUS_TRANSPORT",
    "ProtocolError",
    "encode_tensor",
    "encode_request",
    "encode_response",
    "encode_error",
    "read_tensor",
    "RawRequest",
    "read_request_body",
    "read_response",
    "RemoteBackend",
    "BackendServer",
    "serve",
]

log = logging.getLogger(__name__)

MAGIC = b"GML1"
DTYPE_F32 = 0
STATUS_OK = 0
STATUS_TASK_ERROR = 1
STATUS_TRANSPORT = 2

_MAX_RANK = 8


class ProtocolError(Exception):
    """Raised on malformed or truncated frames."""


def _read_exact(stream: BinaryIO, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining > 0:
        chunk = stream.read(remaining)
        if not chunk:
            raise ProtocolError(f"stream ended {remaining} byte(s) short")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def encode_tensor(t: Tensor) -> bytes:
    dims = t.data.shape
    head = struct.pack("<BB", DTYPE_F32, len(dims)) + struct.pack(f"<{len(dims)}I", *dims)
    payload = np.ascontiguousarray(t.data, dtype="<f4").tobytes()
    return head + payload


def read_tensor(stream: BinaryIO) -> Tensor:
    dtype, rank = struct.unpack("<BB", _read_exact(stream, 2))
    if dtype != DTYPE_F32:
        raise ProtocolError(f"unsupported tensor dtype {dtype}")
    if rank == 0 or rank > _MAX_RANK:
        raise ProtocolError(f"unsupported tensor rank {rank}")
    dims = struct.unpack(f"<{rank}I", _read_exact(stream, 4 * rank))
    count = 1
    for d in dims:
        if d == 0:
            raise ProtocolError("zero tensor dimension")
        count *= d
    payload = _read_exact(stream, 4 * count)
    arr = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
    if arr.ndim != 3:
        raise ProtocolError(f"expected rank-3 image tensors, got rank {arr.ndim}")
    return Tensor(arr)


def encode_request(request: TaskRequest) -> bytes:
    parts = [MAGIC, struct.pack("<BB", int(request.task), int(request.device))]
    parts.append(struct.pack("<H", len(request.params)))
    for key, value in request.params.items():
        raw = key.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<d", float(value)))
    parts.append(struct.pack("<H", len(request.tensors)))
    parts.extend(encode_tensor(t) for t in request.tensors)
    return b"".join(parts)


@dataclass(frozen=True, eq=False)
class RawRequest:
    """A fully framed request before task/device ids are validated."""

    task_id: int
    device_id: int
    params: dict
    tensors: tuple[Tensor, ...]

    def to_request(self) -> TaskRequest:
        try:
            task = TaskKind(self.task_id)
        except ValueError:
            raise TaskError(f"unknown task id {self.task_id}")
        try:
            device = DevicePolicy(self.device_id)
        except ValueError:
            raise TaskError(f"unknown device policy {self.device_id}")
        return TaskRequest(task=task, device=device, params=self.params, tensors=self.tensors)


def read_request_body(stream: BinaryIO) -> RawRequest:
    """Decode a request frame after its magic has been consumed.

    Framing errors raise :class:`ProtocolError`; semantically invalid task or
    device ids are still framed correctly and surface later as task errors.
    """
    task_id, device_id = struct.unpack("<BB", _read_exact(stream, 2))
    (n_params,) = struct.unpack("<H", _read_exact(stream, 2))
    params = {}
    for _ in range(n_params):
        (key_len,) = struct.unpack("<H", _read_exact(stream, 2))
        key = _read_exact(stream, key_len).decode("utf-8")
        (value,) = struct.unpack("<d", _read_exact(stream, 8))
        params[key] = value
    (n_tensors,) = struct.unpack("<H", _read_exact(stream, 2))
    tensors = tuple(read_tensor(stream) for _ in range(n_tensors))
    return RawRequest(task_id=task_id, device_id=device_id, params=params, tensors=tensors)


def encode_response(tensors: Sequence[Tensor]) -> bytes:
    parts = [MAGIC, struct.pack("<BH", STATUS_OK, len(tensors))]
    parts.extend(encode_tensor(t) for t in tensors)
    return b"".join(parts)


def encode_error(status: int, message: str) -> bytes:
    raw = message.encode("utf-8")
    return MAGIC + struct.pack("<BI", status, len(raw)) + raw


def read_response(stream: BinaryIO) -> TaskResponse:
    """Decode a response frame, raising the error category it carries."""
    magic = _read_exact(stream, 4)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    (status,) = struct.unpack("<B", _read_exact(stream, 1))
    if status == STATUS_OK:
        (n_tensors,) = struct.unpack("<H", _read_exact(stream, 2))
        return TaskResponse(tuple(read_tensor(stream) for _ in range(n_tensors)))
    (msg_len,) = struct.unpack("<I", _read_exact(stream, 4))
    message = _read_exact(stream, msg_len).decode("utf-8")
    if status == STATUS_TASK_ERROR:
        raise TaskError(message)
    if status == STATUS_TRANSPORT:
        raise TransportError(message)
    raise ProtocolError(f"unknown response status {status}")


class RemoteBackend:
    """Client for a backend served over the wire protocol.

    Opens one connection per request; connection failures and malformed frames
    surface as :class:`TransportError`, task rejections as :class:`TaskError`.
    """

    def __init__(self, host: str, port: int, timeout: float = 30.0) -> None:
        self.host = host
        self.port = port
        self.timeout = timeout

    def accelerator_available(self) -> bool:
        # The wire protocol has no capability query; assume the conservative
        # CPU default and let the serving side resolve AUTO for itself.
        return False

    def run_task(self, request: TaskRequest) -> TaskResponse:
        try:
            with socket.create_connection((self.host, self.port), timeout=self.timeout) as sock:
                sock.sendall(encode_request(request))
                sock.shutdown(socket.SHUT_WR)
                with sock.makefile("rb") as stream:
                    return read_response(stream)
        except (OSError, ProtocolError) as exc:
            raise TransportError(f"backend at {self.host}:{self.port} unreachable: {exc}") from exc


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        backend: Backend = self.server.backend  # type: ignore[attr-defined]
        while True:
            magic = self.rfile.read(4)
            if not magic:
                return
            if magic != MAGIC:
                self.wfile.write(encode_error(STATUS_TRANSPORT, "bad magic"))
                return
            try:
                raw = read_request_body(self.rfile)
            except ProtocolError as exc:
                self.wfile.write(encode_error(STATUS_TRANSPORT, f"malformed request: {exc}"))
                return
            try:
                request = raw.to_request()
            except TaskError as exc:
                self.wfile.write(encode_error(STATUS_TASK_ERROR, str(exc)))
                continue
            device = resolve_device(request.device, backend.accelerator_available())
            log.info(
                "task=%s device=%s shapes=%s",
                request.task.name,
                device,
                [t.shape for t in request.tensors],
            )
            try:
                response = backend.run_task(request)
            except TaskError as exc:
                self.wfile.write(encode_error(STATUS_TASK_ERROR, str(exc)))
                continue
            self.wfile.write(encode_response(response.tensors))


class BackendServer(socketserver.ThreadingTCPServer):
    """Serves a backend over TCP, one thread per connection."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], backend: Backend) -> None:
        super().__init__(address, _Handler)
        self.backend = backend

    @property
    def port(self) -> int:
        return self.server_address[1]

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


def serve(backend: Backend, host: str = "127.0.0.1", port: int = 0) -> None:
    """Serve ``backend`` until interrupted; logs the bound address on startup."""
    with BackendServer((host, port), backend) as server:
        log.info("listening on %s:%d", server.server_address[0], server.port)
        server.serve_forever()
