"""Server-conformance checks for the MPROBE/1 protocol.

These checks drive any server (the in-process mock used in the package's own
tests, or an out-of-process bridge) through the client and through raw
transports, asserting the observable contract: handshake fields, bit-exact
float32 round-trips, rejection of stale handshake versions, and error frames
(with the connection kept alive) for malformed or mis-sized requests.

Each check opens fresh connections from the endpoint address, so the same
suite runs unmodified over TCP and over standard streams.
"""

from __future__ import annotations

import numpy as np

from . import protocol
from .errors import DimensionMismatchError
from .protocol import (
    TAG_ERROR,
    TAG_REQUEST,
    TAG_RESPONSE,
    connect_external,
    encode_frame,
    encode_handshake,
    open_transport,
    read_frame,
    read_handshake_reply,
)


def check_handshake(endpoint: str, timeout: float = 10.0):
    """Connect and validate the advertised descriptor; returns it."""
    with connect_external(endpoint, timeout) as gen:
        desc = gen.descriptor
        assert desc.latent_dim >= 1, "advertised latent_dim must be >= 1"
        assert all(v >= 1 for v in desc.output_shape), "advertised shape must be positive"
        return desc


def check_roundtrip(endpoint: str, reference_fn, latents, timeout: float = 10.0) -> None:
    """Evaluate each latent and compare bit-exactly against the reference.

    ``reference_fn`` must reproduce the server's local computation as a
    float32 array; the comparison is on the exact 32-bit values.
    """
    with connect_external(endpoint, timeout) as gen:
        for z in latents:
            got = gen.evaluate(z)
            want = np.asarray(reference_fn(np.asarray(z, dtype=float)), dtype="<f4")
            assert got.shape == gen.descriptor.output_shape
            np.testing.assert_array_equal(
                got.astype("<f4").ravel(), want.ravel(),
                err_msg="round-trip is not bit-exact",
            )


def check_dimension_precheck(endpoint: str, timeout: float = 10.0) -> None:
    """A wrong-length latent must fail client-side, before any frame is sent,
    leaving the connection usable."""
    with connect_external(endpoint, timeout) as gen:
        bad = np.zeros(gen.descriptor.latent_dim + 1)
        try:
            gen.evaluate(bad)
        except DimensionMismatchError:
            pass
        else:
            raise AssertionError("oversized latent was not rejected")
        gen.evaluate(np.zeros(gen.descriptor.latent_dim))


def check_version_rejection(endpoint: str, timeout: float = 10.0) -> None:
    """A version-0 handshake must be answered with a version error frame."""
    transport = open_transport(endpoint, timeout)
    try:
        transport.write(encode_handshake(version=0))
        tag, _, payload = read_frame(transport)
        assert tag == TAG_ERROR, f"expected error frame, got tag {tag}"
        assert b"version" in payload.lower(), payload
    finally:
        transport.close()


def _handshake_raw(transport):
    transport.write(encode_handshake())
    version, descriptor = read_handshake_reply(transport)
    assert version == protocol.PROTOCOL_VERSION
    return descriptor


def check_payload_length_error(endpoint: str, timeout: float = 10.0) -> None:
    """A request with the wrong payload length must produce an error frame
    naming the expected byte length, and the connection must stay usable."""
    transport = open_transport(endpoint, timeout)
    try:
        desc = _handshake_raw(transport)
        expected_bytes = 4 * desc.latent_dim
        bad_payload = np.zeros(desc.latent_dim + 1, dtype="<f4").tobytes()
        transport.write(encode_frame(TAG_REQUEST, 1, bad_payload))
        tag, _, payload = read_frame(transport)
        assert tag == TAG_ERROR, f"expected error frame, got tag {tag}"
        assert str(expected_bytes).encode() in payload, (
            f"error message must name the expected length {expected_bytes}: {payload!r}"
        )
        good = np.zeros(desc.latent_dim, dtype="<f4").tobytes()
        transport.write(encode_frame(TAG_REQUEST, 2, good))
        tag, rid, payload = read_frame(transport)
        assert tag == TAG_RESPONSE and rid == 2
        c, h, w = desc.output_shape
        assert len(payload) == 4 * c * h * w
    finally:
        transport.close()


def check_malformed_tag_error(endpoint: str, timeout: float = 10.0) -> None:
    """An unknown frame tag must produce an error frame, connection kept."""
    transport = open_transport(endpoint, timeout)
    try:
        desc = _handshake_raw(transport)
        transport.write(encode_frame(99, 7, b""))
        tag, _, _ = read_frame(transport)
        assert tag == TAG_ERROR, f"expected error frame, got tag {tag}"
        good = np.zeros(desc.latent_dim, dtype="<f4").tobytes()
        transport.write(encode_frame(TAG_REQUEST, 8, good))
        tag, rid, _ = read_frame(transport)
        assert tag == TAG_RESPONSE and rid == 8
    finally:
        transport.close()


def run_server_conformance(endpoint: str, reference_fn=None, latents=None,
                           timeout: float = 10.0) -> None:
    """Run every server-side conformance check against an endpoint."""
    desc = check_handshake(endpoint, timeout)
    if latents is None:
        rng = np.random.Generator(np.random.PCG64(0))
        latents = [rng.standard_normal(desc.latent_dim) for _ in range(4)]
    if reference_fn is not None:
        check_roundtrip(endpoint, reference_fn, latents, timeout)
    check_dimension_precheck(endpoint, timeout)
    check_version_rejection(endpoint, timeout)
    check_payload_length_error(endpoint, timeout)
    check_malformed_tag_error(endpoint, timeout)
