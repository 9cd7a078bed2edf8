"""Client side of the MPROBE/1 external-generator wire protocol.

Wire format (all integers little-endian unsigned 32-bit, all tensor payloads
little-endian 32-bit floats, row-major):

* Handshake: the client sends the magic bytes ``MPRB`` followed by its
  protocol version; the server replies with the magic, its version, then
  latent_dim, C, H, W and a flags word (bit 0 = concurrent_safe).
* Frames: tag, request_id, payload byte length, payload. Tag 1 is a request
  carrying latent_dim floats; tag 2 a response carrying C*H*W floats; tag 3
  an error carrying a UTF-8 message.

Transports: ``tcp://host:port`` connects a socket; ``stdio://<command>``
spawns the command and speaks over its standard streams (the server's
stderr is inherited for logging). One server process serves one condition.
"""

from __future__ import annotations

import selectors
import shlex
import socket
import struct
import subprocess
import threading
import time

import numpy as np

from .errors import (
    DimensionMismatchError,
    MalformedFrameError,
    ProtocolError,
    RemoteGeneratorError,
    ServerDisconnectedError,
    TransportTimeoutError,
    VersionMismatchError,
)
from .generators import Generator, GeneratorDescriptor

MAGIC = b"MPRB"
PROTOCOL_VERSION = 1

TAG_REQUEST = 1
TAG_RESPONSE = 2
TAG_ERROR = 3

FLAG_CONCURRENT_SAFE = 1

_U32 = struct.Struct("<I")
_FRAME_HEADER = struct.Struct("<III")
_HANDSHAKE_REPLY = struct.Struct("<IIIIII")  # version, E, C, H, W, flags

DEFAULT_TIMEOUT = 10.0


class Transport:
    """Byte-stream transport with exact reads and a deadline."""

    def read_exact(self, n: int) -> bytes:
        raise NotImplementedError

    def write(self, data: bytes) -> None:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError


class TCPTransport(Transport):
    def __init__(self, host: str, port: int, timeout: float = DEFAULT_TIMEOUT):
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except socket.timeout as exc:
            raise TransportTimeoutError(f"connect to {host}:{port} timed out") from exc
        except OSError as exc:
            raise ProtocolError(f"cannot connect to {host}:{port}: {exc}") from exc
        self._sock.settimeout(timeout)

    def read_exact(self, n: int) -> bytes:
        chunks = []
        remaining = n
        while remaining > 0:
            try:
                chunk = self._sock.recv(remaining)
            except socket.timeout as exc:
                raise TransportTimeoutError("read timed out") from exc
            except OSError as exc:
                raise ServerDisconnectedError(f"connection lost: {exc}") from exc
            if not chunk:
                raise ServerDisconnectedError(
                    f"peer closed with {remaining} of {n} bytes outstanding"
                )
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def write(self, data: bytes) -> None:
        try:
            self._sock.sendall(data)
        except OSError as exc:
            raise ServerDisconnectedError(f"write failed: {exc}") from exc

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class StdioTransport(Transport):
    """Speaks the protocol over a spawned subprocess's stdin/stdout."""

    def __init__(self, argv: list[str], timeout: float = DEFAULT_TIMEOUT):
        self._timeout = timeout
        self._proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE
        )
        self._selector = selectors.DefaultSelector()
        self._selector.register(self._proc.stdout, selectors.EVENT_READ)

    def read_exact(self, n: int) -> bytes:
        deadline = time.monotonic() + self._timeout
        chunks = []
        remaining = n
        fd = self._proc.stdout
        while remaining > 0:
            budget = deadline - time.monotonic()
            if budget <= 0:
                raise TransportTimeoutError("read timed out")
            if not self._selector.select(timeout=budget):
                raise TransportTimeoutError("read timed out")
            chunk = fd.read1(remaining)
            if not chunk:
                raise ServerDisconnectedError(
                    f"server exited with {remaining} of {n} bytes outstanding"
                )
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def write(self, data: bytes) -> None:
        try:
            self._proc.stdin.write(data)
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ServerDisconnectedError(f"write failed: {exc}") from exc

    def close(self) -> None:
        self._selector.close()
        for stream in (self._proc.stdin, self._proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        self._proc.terminate()
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()


def open_transport(endpoint: str, timeout: float = DEFAULT_TIMEOUT) -> Transport:
    """Open a transport from an endpoint address.

    ``tcp://host:port`` or ``stdio://<command line>`` (shlex-split).
    """
    if endpoint.startswith("tcp://"):
        rest = endpoint[len("tcp://"):]
        host, _, port = rest.rpartition(":")
        if not host or not port.isdigit():
            raise ProtocolError(f"bad tcp endpoint {endpoint!r}; expected tcp://host:port")
        return TCPTransport(host, int(port), timeout)
    if endpoint.startswith("stdio://"):
        argv = shlex.split(endpoint[len("stdio://"):])
        if not argv:
            raise ProtocolError("stdio endpoint needs a command line")
        return StdioTransport(argv, timeout)
    raise ProtocolError(f"unknown endpoint scheme in {endpoint!r}")


def encode_handshake(version: int = PROTOCOL_VERSION) -> bytes:
    return MAGIC + _U32.pack(version)


def encode_handshake_reply(latent_dim: int, shape: tuple[int, int, int],
                           concurrent_safe: bool, version: int = PROTOCOL_VERSION) -> bytes:
    c, h, w = shape
    flags = FLAG_CONCURRENT_SAFE if concurrent_safe else 0
    return MAGIC + _HANDSHAKE_REPLY.pack(version, latent_dim, c, h, w, flags)


def encode_frame(tag: int, request_id: int, payload: bytes) -> bytes:
    return _FRAME_HEADER.pack(tag, request_id, len(payload)) + payload


def read_frame(transport: Transport) -> tuple[int, int, bytes]:
    header = transport.read_exact(_FRAME_HEADER.size)
    tag, request_id, length = _FRAME_HEADER.unpack(header)
    payload = transport.read_exact(length) if length else b""
    return tag, request_id, payload


def read_handshake_reply(transport: Transport) -> tuple[int, GeneratorDescriptor]:
    magic = transport.read_exact(len(MAGIC))
    if magic != MAGIC:
        raise MalformedFrameError(f"bad handshake magic {magic!r}")
    version, latent_dim, c, h, w, flags = _HANDSHAKE_REPLY.unpack(
        transport.read_exact(_HANDSHAKE_REPLY.size)
    )
    descriptor = GeneratorDescriptor(
        latent_dim=latent_dim,
        output_shape=(c, h, w),
        concurrent_safe=bool(flags & FLAG_CONCURRENT_SAFE),
        name="external",
    )
    return version, descriptor


class ExternalGenerator(Generator):
    """A generator whose evaluations round-trip latents over the wire.

    Requests on one connection are serialized behind a lock; responses match
    requests by id, so a pool of connections may serve concurrent callers
    when the handshake advertises concurrent safety.
    """

    def __init__(self, transport: Transport, descriptor: GeneratorDescriptor):
        super().__init__(descriptor)
        self._transport = transport
        self._lock = threading.Lock()
        self._next_id = 0
        self._closed = False

    def evaluate(self, z) -> np.ndarray:
        desc = self.descriptor
        zv = np.asarray(z, dtype=float).ravel()
        if zv.size != desc.latent_dim:
            raise DimensionMismatchError(
                f"latent length {zv.size} != server latent_dim {desc.latent_dim}"
            )
        with self._lock:
            if self._closed:
                raise ProtocolError("generator connection is closed")
            self._next_id += 1
            request_id = self._next_id
            payload = zv.astype("<f4").tobytes()
            self._transport.write(encode_frame(TAG_REQUEST, request_id, payload))
            tag, rid, body = read_frame(self._transport)
        if tag == TAG_ERROR:
            raise RemoteGeneratorError(body.decode("utf-8", errors="replace"))
        if tag != TAG_RESPONSE:
            raise MalformedFrameError(f"unexpected frame tag {tag}")
        if rid != request_id:
            raise MalformedFrameError(
                f"response id {rid} does not match request id {request_id}"
            )
        expected = 4 * desc.output_size
        if len(body) != expected:
            raise MalformedFrameError(
                f"response payload {len(body)} bytes, expected {expected}"
            )
        values = np.frombuffer(body, dtype="<f4").astype(float)
        return values.reshape(desc.output_shape)

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


def connect_external(endpoint: str, timeout: float = DEFAULT_TIMEOUT) -> ExternalGenerator:
    """Handshake with an external generator server and wrap it as a Generator."""
    transport = open_transport(endpoint, timeout)
    try:
        transport.write(encode_handshake())
        version, descriptor = read_handshake_reply(transport)
        if version != PROTOCOL_VERSION:
            raise VersionMismatchError(
                f"server speaks version {version}, client requires {PROTOCOL_VERSION}"
            )
    except ProtocolError:
        transport.close()
        raise
    return ExternalGenerator(transport, descriptor)
