"""Drives the bridge with the primary client's conformance suite.

The bridge must pass the exact same server-side checks as the primary's
in-process mock, over TCP and over standard streams, while running the
deterministic stub pipeline.
"""

import subprocess
import sys
import time

import numpy as np
import pytest

from latentgeo.conformance import run_server_conformance
from latentgeo.protocol import connect_external

from mprobe_bridge.config import ServerConfig
from mprobe_bridge.pipelines import StubPipeline, build_pipeline


def stub_config(**overrides):
    base = dict(
        condition="normal",
        prompt="a photorealistic reference condition",
        listen="tcp://127.0.0.1:0",
        latent_dim=5,
        output_shape=(2, 3, 4),
        pipeline="stub",
        pipeline_seed=7,
    )
    base.update(overrides)
    return ServerConfig.from_dict(base)


def reference_fn(config):
    pipeline = StubPipeline(config)

    def fn(z):
        return pipeline(np.asarray(z, dtype="<f4"))

    return fn


@pytest.fixture
def tcp_bridge(tmp_path):
    config = stub_config()
    cfg_path = tmp_path / "server.json"
    config.save(cfg_path)
    ready = tmp_path / "endpoint.txt"
    proc = subprocess.Popen(
        [sys.executable, "-m", "mprobe_bridge", "serve",
         "--config", str(cfg_path), "--ready-file", str(ready)],
        stdout=subprocess.DEVNULL,
    )
    deadline = time.monotonic() + 10.0
    while not ready.exists() or not ready.read_text().strip():
        if time.monotonic() > deadline or proc.poll() is not None:
            proc.kill()
            raise RuntimeError("bridge server did not come up")
        time.sleep(0.02)
    endpoint = ready.read_text().strip()
    yield config, endpoint
    proc.terminate()
    proc.wait(timeout=5)


class TestOverTcp:
    def test_conformance_suite(self, tcp_bridge):
        config, endpoint = tcp_bridge
        run_server_conformance(endpoint, reference_fn(config))
        print("PASS  criterion 11 (tcp): bridge conformance over TCP")

    def test_descriptor_matches_config(self, tcp_bridge):
        config, endpoint = tcp_bridge
        with connect_external(endpoint) as gen:
            assert gen.descriptor.latent_dim == config.latent_dim
            assert gen.descriptor.output_shape == tuple(config.output_shape)
            assert gen.descriptor.concurrent_safe is False

    def test_deterministic_responses(self, tcp_bridge, rng=None):
        config, endpoint = tcp_bridge
        z = np.linspace(-1.0, 1.0, config.latent_dim)
        with connect_external(endpoint) as gen:
            first = gen.evaluate(z)
            second = gen.evaluate(z)
        with connect_external(endpoint) as gen:
            third = gen.evaluate(z)
        assert np.array_equal(first, second)
        assert np.array_equal(first, third)


class TestOverStdio:
    def endpoint(self, tmp_path):
        config = stub_config(listen="stdio")
        cfg_path = tmp_path / "stdio.json"
        config.save(cfg_path)
        cmd = f"{sys.executable} -m mprobe_bridge serve --config {cfg_path} --stdio"
        return config, f"stdio://{cmd}"

    def test_conformance_suite(self, tmp_path):
        config, endpoint = self.endpoint(tmp_path)
        run_server_conformance(endpoint, reference_fn(config), timeout=15.0)
        print("PASS  criterion 11 (stdio): bridge conformance over standard streams")

    def test_round_trip_bit_exact(self, tmp_path):
        config, endpoint = self.endpoint(tmp_path)
        fn = reference_fn(config)
        with connect_external(endpoint, timeout=15.0) as gen:
            for i in range(3):
                z = np.sin(np.arange(config.latent_dim) + i)
                np.testing.assert_array_equal(
                    gen.evaluate(z).astype("<f4").ravel(), fn(z))


class TestPipelineContract:
    def test_declared_shape_checked(self):
        bad = stub_config(output_shape=(2, 3, 4))
        bad.latent_dim = 5
        bad.output_shape = (1, 1, 7)
        pipeline = build_pipeline(bad)  # stub adapts to the declared shape
        assert pipeline(np.zeros(5, dtype="<f4")).size == 7

    def test_stub_deterministic_across_instances(self):
        config = stub_config()
        a, b = StubPipeline(config), StubPipeline(config)
        z = np.arange(config.latent_dim, dtype="<f4")
        assert np.array_equal(a(z), b(z))
