"""MPROBE/1 server loop over TCP or standard streams.

Wire format (little-endian u32 integers, little-endian float32 payloads):

* Handshake: client sends ``MPRB`` + version; the server answers ``MPRB`` +
  version + latent_dim + C + H + W + flags (bit 0 = concurrent-safe). A
  stale client version is rejected with a version-mismatch error frame.
* Frames: tag, request_id, payload byte length, payload. Tag 1 requests an
  evaluation (latent_dim floats), tag 2 answers (C*H*W floats), tag 3
  carries a UTF-8 error message.

Malformed frames and pipeline failures answer with error frames and keep
the connection; only handshake failures close it. Logs go to stderr.
"""

from __future__ import annotations

import socket
import struct
import sys
import threading

import numpy as np

from .config import ServerConfig
from .pipelines import build_pipeline

MAGIC = b"MPRB"
PROTOCOL_VERSION = 1

TAG_REQUEST = 1
TAG_RESPONSE = 2
TAG_ERROR = 3

_U32 = struct.Struct("<I")
_HEADER = struct.Struct("<III")
_REPLY = struct.Struct("<IIIIII")


def _log(message: str) -> None:
    print(f"mprobe-bridge: {message}", file=sys.stderr, flush=True)


class _Stream:
    """Uniform read/write over a socket or a stdin/stdout pair."""

    def __init__(self, reader=None, writer=None, sock=None):
        self._reader = reader
        self._writer = writer
        self._sock = sock

    def read_exact(self, n: int) -> bytes | None:
        if self._sock is not None:
            buf = b""
            while len(buf) < n:
                chunk = self._sock.recv(n - len(buf))
                if not chunk:
                    return None
                buf += chunk
            return buf
        buf = b""
        while len(buf) < n:
            chunk = self._reader.read(n - len(buf))
            if not chunk:
                return None
            buf += chunk
        return buf

    def write(self, data: bytes) -> None:
        if self._sock is not None:
            self._sock.sendall(data)
        else:
            self._writer.write(data)
            self._writer.flush()


class BridgeServer:
    def __init__(self, config: ServerConfig):
        config.validate()
        self.config = config
        self.pipeline = build_pipeline(config)
        self.expected_request_bytes = 4 * config.latent_dim
        self._lock = threading.Lock()

    def _send_error(self, stream: _Stream, request_id: int, message: str) -> None:
        payload = message.encode("utf-8")
        stream.write(_HEADER.pack(TAG_ERROR, request_id, len(payload)) + payload)

    def handle_connection(self, stream: _Stream) -> None:
        head = stream.read_exact(8)
        if head is None:
            return
        magic, version = head[:4], _U32.unpack(head[4:])[0]
        if magic != MAGIC:
            self._send_error(stream, 0, f"bad handshake magic {magic!r}")
            return
        if version != PROTOCOL_VERSION:
            self._send_error(
                stream, 0,
                f"protocol version mismatch: client {version}, server "
                f"{PROTOCOL_VERSION}")
            return
        c, h, w = self.config.output_shape
        flags = 1 if self.config.concurrent else 0
        stream.write(MAGIC + _REPLY.pack(
            PROTOCOL_VERSION, self.config.latent_dim, c, h, w, flags))
        while True:
            header = stream.read_exact(_HEADER.size)
            if header is None:
                return
            tag, request_id, length = _HEADER.unpack(header)
            payload = stream.read_exact(length) if length else b""
            if payload is None:
                return
            if tag != TAG_REQUEST:
                self._send_error(stream, request_id, f"unknown frame tag {tag}")
                continue
            if length != self.expected_request_bytes:
                self._send_error(
                    stream, request_id,
                    f"request payload must be {self.expected_request_bytes} "
                    f"bytes ({self.config.latent_dim} float32), got {length}")
                continue
            latent = np.frombuffer(payload, dtype="<f4")
            try:
                with self._lock:
                    values = self.pipeline(latent)
            except Exception as exc:  # pipeline failure keeps the connection
                _log(f"pipeline failure: {exc}")
                self._send_error(stream, request_id, f"pipeline failure: {exc}")
                continue
            body = np.asarray(values, dtype="<f4").tobytes()
            stream.write(_HEADER.pack(TAG_RESPONSE, request_id, len(body)) + body)

    def serve_stdio(self) -> None:
        _log(f"serving condition {self.config.condition!r} on stdio")
        stream = _Stream(reader=sys.stdin.buffer, writer=sys.stdout.buffer)
        self.handle_connection(stream)

    def serve_tcp(self, ready_callback=None) -> None:
        hostport = self.config.listen[len("tcp://"):]
        host, _, port = hostport.rpartition(":")
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((host or "127.0.0.1", int(port or 0)))
        sock.listen(8)
        bound = sock.getsockname()
        endpoint = f"tcp://{bound[0]}:{bound[1]}"
        _log(f"serving condition {self.config.condition!r} on {endpoint}")
        if ready_callback is not None:
            ready_callback(endpoint)
        try:
            while True:
                conn, peer = sock.accept()
                try:
                    if self.config.concurrent:
                        worker = threading.Thread(
                            target=self._handle_socket, args=(conn,), daemon=True)
                        worker.start()
                    else:
                        self._handle_socket(conn)
                except OSError as exc:
                    _log(f"connection error from {peer}: {exc}")
        finally:
            sock.close()

    def _handle_socket(self, conn) -> None:
        try:
            self.handle_connection(_Stream(sock=conn))
        except OSError as exc:
            _log(f"connection dropped: {exc}")
        finally:
            conn.close()


def serve(config: ServerConfig, ready_callback=None) -> None:
    """Run the bridge until the transport closes (stdio) or forever (TCP)."""
    server = BridgeServer(config)
    if config.listen == "stdio":
        server.serve_stdio()
    else:
        server.serve_tcp(ready_callback)
