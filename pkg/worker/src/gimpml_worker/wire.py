"""GML1 frame codec, written against the published wire format.

All integers are little-endian:

    request  := "GML1" | u8 task id | u8 device (0 auto, 1 force-cpu)
              | u16 param count | { u16 key len | key utf-8 | f64 value }*
              | u16 tensor count | tensor*
    tensor   := u8 dtype (0 = f32) | u8 rank | u32 dim * rank | f32 payload
    response := "GML1" | u8 status (0 ok, 1 task error, 2 transport refused)
              | ok:    u16 tensor count | tensor*
              | error: u32 message length | message utf-8

Semantically invalid but well-framed requests (unknown task id, bad shapes)
answer with status 1; broken framing answers status 2 and drops the
connection, since resynchronization is impossible.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"GML1"
DTYPE_F32 = 0
OK = 0
TASK_ERROR = 1
TRANSPORT_ERROR = 2

MAX_RANK = 8


class FramingError(Exception):
    """The byte stream does not parse as a frame."""


class TaskRejected(Exception):
    """The request parsed but cannot be served (status 1)."""


@dataclass
class Request:
    task_id: int
    device_id: int
    params: dict[str, float] = field(default_factory=dict)
    tensors: list[np.ndarray] = field(default_factory=list)


def _take(stream, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            raise FramingError(f"stream ended {n - len(buf)} byte(s) early")
        buf += chunk
    return buf


def read_tensor(stream) -> np.ndarray:
    dtype, rank = _take(stream, 2)
    if dtype != DTYPE_F32:
        raise FramingError(f"unsupported tensor dtype {dtype}")
    if rank == 0 or rank > MAX_RANK:
        raise FramingError(f"unsupported tensor rank {rank}")
    dims = struct.unpack(f"<{rank}I", _take(stream, 4 * rank))
    if any(d == 0 for d in dims):
        raise FramingError("zero tensor dimension")
    count = int(np.prod(dims))
    data = np.frombuffer(_take(stream, 4 * count), dtype="<f4").reshape(dims)
    if data.ndim != 3:
        raise FramingError(f"expected rank-3 image tensors, got rank {data.ndim}")
    return np.ascontiguousarray(data, dtype=np.float32)


def write_tensor(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    header = struct.pack("<BB", DTYPE_F32, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + arr.tobytes()


def read_request(stream) -> Request:
    """Parse one request after its magic has been consumed."""
    task_id, device_id = _take(stream, 2)
    (n_params,) = struct.unpack("<H", _take(stream, 2))
    params: dict[str, float] = {}
    for _ in range(n_params):
        (key_len,) = struct.unpack("<H", _take(stream, 2))
        key = _take(stream, key_len).decode("utf-8")
        (value,) = struct.unpack("<d", _take(stream, 8))
        params[key] = value
    (n_tensors,) = struct.unpack("<H", _take(stream, 2))
    tensors = [read_tensor(stream) for _ in range(n_tensors)]
    return Request(task_id, device_id, params, tensors)


def write_request(req: Request) -> bytes:
    out = [MAGIC, struct.pack("<BB", req.task_id, req.device_id), struct.pack("<H", len(req.params))]
    for key, value in req.params.items():
        encoded = key.encode("utf-8")
        out.append(struct.pack("<H", len(encoded)) + encoded + struct.pack("<d", float(value)))
    out.append(struct.pack("<H", len(req.tensors)))
    out.extend(write_tensor(t) for t in req.tensors)
    return b"".join(out)


def ok_frame(tensors) -> bytes:
    out = [MAGIC, struct.pack("<BH", OK, len(tensors))]
    out.extend(write_tensor(t) for t in tensors)
    return b"".join(out)


def error_frame(status: int, message: str) -> bytes:
    encoded = message.encode("utf-8")
    return MAGIC + struct.pack("<BI", status, len(encoded)) + encoded


def read_response(stream) -> tuple[int, str, list[np.ndarray]]:
    """Returns (status, message, tensors); message is empty on success."""
    if _take(stream, 4) != MAGIC:
        raise FramingError("bad magic in response")
    (status,) = struct.unpack("<B", _take(stream, 1))
    if status == OK:
        (n_tensors,) = struct.unpack("<H", _take(stream, 2))
        return status, "", [read_tensor(stream) for _ in range(n_tensors)]
    (msg_len,) = struct.unpack("<I", _take(stream, 4))
    return status, _take(stream, msg_len).decode("utf-8"), []
