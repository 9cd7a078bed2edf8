"""Standalone stdio MPROBE/1 mock server, spawned by the transport tests.

Reads frames from stdin, writes to stdout, logs nothing. Same pad-echo
semantics as the TCP mock.
"""

import struct
import sys

import numpy as np

MAGIC = b"MPRB"
U32 = struct.Struct("<I")
HEADER = struct.Struct("<III")
REPLY = struct.Struct("<IIIIII")

LATENT_DIM = 3
SHAPE = (1, 2, 2)


def read_exact(stream, n):
    buf = b""
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


def main():
    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer
    head = read_exact(stdin, 8)
    if head is None or head[:4] != MAGIC:
        return
    version = U32.unpack(head[4:])[0]
    if version != 1:
        payload = f"unsupported protocol version {version}".encode()
        stdout.write(HEADER.pack(3, 0, len(payload)) + payload)
        stdout.flush()
        return
    c, h, w = SHAPE
    stdout.write(MAGIC + REPLY.pack(1, LATENT_DIM, c, h, w, 0))
    stdout.flush()
    out_size = c * h * w
    while True:
        header = read_exact(stdin, HEADER.size)
        if header is None:
            return
        tag, request_id, length = HEADER.unpack(header)
        payload = read_exact(stdin, length) if length else b""
        if payload is None:
            return
        if tag != 1:
            msg = f"unknown frame tag {tag}".encode()
            stdout.write(HEADER.pack(3, request_id, len(msg)) + msg)
            stdout.flush()
            continue
        if length != 4 * LATENT_DIM:
            msg = f"request payload must be {4 * LATENT_DIM} bytes, got {length}".encode()
            stdout.write(HEADER.pack(3, request_id, len(msg)) + msg)
            stdout.flush()
            continue
        z = np.frombuffer(payload, dtype="<f4")
        out = np.zeros(out_size, dtype="<f4")
        out[: z.size] = z
        body = out.tobytes()
        stdout.write(HEADER.pack(2, request_id, len(body)) + body)
        stdout.flush()


if __name__ == "__main__":
    main()
