"""TCP server hosting the mirror task suite behind the GML1 protocol.

One thread per connection; requests on a connection are answered strictly in
order.  Broken framing gets a status-2 frame and the connection is dropped;
semantically bad requests get status 1 and the connection lives on.
"""

from __future__ import annotations

import argparse
import logging
import socket
import sys
import threading

from . import wire
from .tasks import TASK_NAMES, TaskRejected, dispatch

log = logging.getLogger("gimpml_worker")

ACCELERATOR_AVAILABLE = False  # reference worker runs on the CPU


def resolve_device(device_id: int) -> str:
    if device_id == 1:  # force-cpu
        return "cpu"
    return "gpu" if ACCELERATOR_AVAILABLE else "cpu"


def _handle_connection(conn: socket.socket) -> None:
    stream = conn.makefile("rb")
    try:
        while True:
            magic = stream.read(4)
            if not magic:
                return
            if magic != wire.MAGIC:
                conn.sendall(wire.error_frame(wire.TRANSPORT_ERROR, "bad magic"))
                return
            try:
                request = wire.read_request(stream)
            except wire.FramingError as exc:
                conn.sendall(wire.error_frame(wire.TRANSPORT_ERROR, f"malformed request: {exc}"))
                return
            name = TASK_NAMES.get(request.task_id, f"id-{request.task_id}")
            log.info(
                "task=%s device=%s shapes=%s",
                name,
                resolve_device(request.device_id),
                [t.shape for t in request.tensors],
            )
            if request.device_id not in (0, 1):
                conn.sendall(wire.error_frame(wire.TASK_ERROR, f"unknown device policy {request.device_id}"))
                continue
            try:
                outputs = dispatch(request.task_id, request.tensors, request.params)
            except TaskRejected as exc:
                conn.sendall(wire.error_frame(wire.TASK_ERROR, str(exc)))
                continue
            conn.sendall(wire.ok_frame(outputs))
    finally:
        stream.close()
        conn.close()


class WorkerServer:
    """Accept loop wrapper with a background-thread mode for tests."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0) -> None:
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen()
        self._closing = threading.Event()
        self.host, self.port = self._sock.getsockname()[:2]

    def serve_forever(self) -> None:
        log.info("listening on %s:%d", self.host, self.port)
        while not self._closing.is_set():
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return  # socket closed
            threading.Thread(target=_handle_connection, args=(conn,), daemon=True).start()

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread

    def close(self) -> None:
        self._closing.set()
        self._sock.close()


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    parser = argparse.ArgumentParser(prog="gimpml-worker", description="Reference GML1 inference worker.")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=9101, help="TCP port (0 picks a free one)")
    args = parser.parse_args(argv)
    try:
        server = WorkerServer(args.host, args.port)
    except OSError as exc:
        print(f"error: cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return 1
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
