"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run as `pytest -s tests/test_acceptance.py` to see the per-criterion lines.
Every tolerance and time budget is pinned here.
"""

import json
import os
import time
from contextlib import contextmanager

import numpy as np
import pytest

from latentgeo.campaign import run_diagnose, run_trajectory, load_records
from latentgeo.cli import main
from latentgeo.config import GeneratorSpec, RunConfig
from latentgeo.generators import make_builtin
from latentgeo.geometry import (
    SpectralDecomposition,
    SubspaceBasis,
    eigendecompose,
    fd_jacobian,
    local_complexity,
    local_scaling,
    metric_tensor,
    sample_orthonormal_basis,
)
from latentgeo.imaging import laplacian, phfe, topk_share, variance_energy
from latentgeo.stats import auroc, spearman
from latentgeo.trajectory import extremal_increments, monte_carlo_ratio
from mprobe_mock import MockServer, pad_echo

from test_geometry import CROSSING_Z1, identity_basis, oracle_lc_saddle_fd
from test_trajectory import manual_path, oracle_monte_carlo


@contextmanager
def criterion(number, title, budget_seconds):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"FAIL  criterion {number}: {title}")
        raise
    elapsed = time.perf_counter() - start
    assert elapsed < budget_seconds, (
        f"criterion {number} took {elapsed:.2f}s, budget {budget_seconds}s")
    print(f"PASS  criterion {number}: {title} ({elapsed:.2f}s)")


def test_criterion_1_fd_jacobian_oracle_equivalence(rng):
    with criterion(1, "FD-Jacobian oracle equivalence", 5.0):
        # exactness on linear maps
        for gen in (
            make_builtin("linear", {"matrix": rng.standard_normal((4, 3))}),
            make_builtin("contraction_sampler", {"latent_dim": 3}),
        ):
            basis = sample_orthonormal_basis(3, 3, seed=1)
            scale = np.abs(gen.analytic_jacobian(np.zeros(3))).max()
            for _ in range(100):
                z = rng.standard_normal(3)
                jac = fd_jacobian(gen, z, basis, 1e-3)
                exact = gen.analytic_jacobian(z) @ basis.columns
                assert np.abs(jac.matrix - exact).max() <= 1e-6 * max(scale, 1.0)

        # first-order convergence on curved generators
        curved = [
            make_builtin("saddle", {"latent_dim": 2}),
            make_builtin("sphere", {"latent_dim": 2}),
            make_builtin("random_feature", {"latent_dim": 2}, seed=4),
            make_builtin("coupled_family", {}, seed=9),
            make_builtin("curl_sampler", {"latent_dim": 2}),
        ]
        for gen in curved:
            e = gen.descriptor.latent_dim
            basis = sample_orthonormal_basis(e, e, seed=2)
            zs = []
            while len(zs) < 100:
                z = rng.standard_normal(e)
                if np.linalg.norm(z) >= 0.5:
                    zs.append(z)
            worst = []
            for eps in (1e-2, 5e-3, 2.5e-3):
                err = 0.0
                for z in zs:
                    jac = fd_jacobian(gen, z, basis, eps)
                    exact = gen.analytic_jacobian(z) @ basis.columns
                    err = max(err, np.abs(jac.matrix - exact).max())
                worst.append(err)
            for a, b in zip(worst, worst[1:]):
                assert 1.8 <= a / b <= 2.2, (gen.descriptor.name, worst)


def test_criterion_2_spectral_identities(rng):
    with criterion(2, "spectral identities on random PSD matrices", 5.0):
        for _ in range(1000):
            p = int(rng.integers(1, 33))
            m = rng.standard_normal((p + 1, p))
            a = (m.T @ m + (m.T @ m).T) / 2.0
            d = eigendecompose(a)
            assert np.all(np.diff(d.eigenvalues) <= 1e-12)
            np.testing.assert_allclose(
                np.linalg.norm(d.eigenvectors, axis=0), np.ones(p), atol=1e-10)
            recon = d.eigenvectors @ np.diag(d.eigenvalues) @ d.eigenvectors.T
            assert np.linalg.norm(recon - a) <= 1e-8 * max(np.linalg.norm(a), 1e-30)
        d = SpectralDecomposition(np.array([9.0, 4.0]), np.eye(2))
        assert abs(local_scaling(d) - np.log(6.0)) <= 1e-10
        flipped = SpectralDecomposition(np.array([9.0, 4.0]), -np.eye(2))
        assert local_scaling(flipped) == local_scaling(d)


def test_criterion_3_zero_curvature_and_crossing(rng):
    with criterion(3, "zero-curvature law and saddle crossing", 10.0):
        matrices = [np.diag([2.0, 3.0]), rng.standard_normal((3, 2)) + np.eye(3, 2)]
        count = 0
        for matrix in matrices:
            gen = make_builtin("linear", {"matrix": matrix})
            basis = sample_orthonormal_basis(2, 2, seed=3)
            for _ in range(50):
                z = rng.standard_normal(2)
                base = eigendecompose(metric_tensor(fd_jacobian(gen, z, basis, 1e-3)))
                res = local_complexity(gen, z, basis, base,
                                       neighbor_count=4, seed=count)
                assert res.value < 1e-8
                count += 1
        assert count == 100

        gen = make_builtin("saddle", {"latent_dim": 2})
        basis = identity_basis(2)
        z = np.array([CROSSING_Z1, 0.0])
        base = eigendecompose(metric_tensor(fd_jacobian(gen, z, basis, 1e-3)))
        res = local_complexity(gen, z, basis, base, neighbor_radius=1e-2,
                               neighbor_count=8, epsilon=1e-3, seed=0)
        assert res.degenerate, "degeneracy flag must be set at the crossing"
        assert res.value > 0.1
        expected = oracle_lc_saddle_fd(z, 1e-3, 1e-2, 8, seed=0)
        assert res.value == pytest.approx(expected, abs=1e-4)


def family_campaign_config(out_dir):
    return RunConfig(
        latent_dim=3,
        subspace_dim=3,
        seeds=tuple(range(200)),
        conditions={
            "normal": GeneratorSpec(type="builtin", kind="coupled_family",
                                    params={"image_size": 8}),
            "ood": GeneratorSpec(type="builtin", kind="decoupled_family",
                                 params={"image_size": 8}),
        },
        out_dir=str(out_dir),
        jobs=1,
    )


def test_criterion_4_synthetic_decoupling(tmp_path):
    with criterion(4, "synthetic decoupling via cmd_correlate and cmd_ood", 60.0):
        cfg = family_campaign_config(tmp_path / "family")
        cfg_path = tmp_path / "family.json"
        cfg.save(cfg_path)
        assert main(["diagnose", "--config", str(cfg_path)]) == 0
        records_path = str(tmp_path / "family" / "records.jsonl")

        assert main(["correlate", "--records", records_path,
                     "--pairs", "lc:phfe",
                     "--out-dir", str(tmp_path / "corr")]) == 0
        with open(tmp_path / "corr" / "correlations.json") as fh:
            table = json.load(fh)["correlations"]
        coupled_rho = table["normal"]["lc:phfe"]["rho_mean"]
        decoupled_rho = table["ood"]["lc:phfe"]["rho_mean"]
        assert coupled_rho >= 0.8, coupled_rho
        assert abs(decoupled_rho) <= 0.2, decoupled_rho

        assert main(["ood", "--records", records_path,
                     "--out-dir", str(tmp_path / "ood")]) == 0
        with open(tmp_path / "ood" / "ood.json") as fh:
            detection = json.load(fh)
        assert detection["auroc"] >= 0.9, detection["auroc"]
        assert detection["baselines"]["ls_raw"] <= 0.7, detection["baselines"]


def brute_ranks(x):
    less = (x[None, :] < x[:, None]).sum(axis=1)
    equal = (x[None, :] == x[:, None]).sum(axis=1) - 1
    return 1.0 + less + 0.5 * equal


def brute_spearman(x, y):
    rx, ry = brute_ranks(x), brute_ranks(y)
    xc = rx - rx.mean()
    yc = ry - ry.mean()
    return float((xc @ yc) / np.sqrt((xc @ xc) * (yc @ yc)))


def brute_auroc(scores, labels):
    pos = scores[labels.astype(bool)]
    neg = scores[~labels.astype(bool)]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return float(wins / (pos.size * neg.size))


def test_criterion_5_statistics_oracles(rng):
    with criterion(5, "spearman/auroc/quantile oracle equivalence", 30.0):
        for _ in range(1000):
            n = int(rng.integers(3, 201))
            x = rng.integers(0, 10, size=n).astype(float)
            y = rng.integers(0, 10, size=n).astype(float)
            if len(set(x)) == 1:
                x[0] += 1.0
            if len(set(y)) == 1:
                y[0] += 1.0
            assert spearman(x, y) == brute_spearman(x, y)

            labels = rng.integers(0, 2, size=n)
            if labels.sum() in (0, n):
                labels[0] = 1 - labels[0]
            scores = rng.integers(0, 8, size=n).astype(float)
            assert auroc(scores, labels) == brute_auroc(scores, labels)

            values = rng.random(int(rng.integers(1, 60)))
            xs = np.sort(values)

            def sort_q(q):
                pos = q * (xs.size - 1)
                lo = int(np.floor(pos))
                hi = min(lo + 1, xs.size - 1)
                return float(xs[lo] + (pos - lo) * (xs[hi] - xs[lo]))

            q90, q95, mx = extremal_increments(values)
            assert (q90, q95, mx) == (sort_q(0.90), sort_q(0.95), float(xs[-1]))


def test_criterion_6_trajectory_identities(tmp_path, rng):
    with criterion(6, "trajectory identities and identity-vs-curl ordering", 60.0):
        identity = make_builtin("linear", {"latent_dim": 3})
        for _ in range(200):
            pts = [rng.standard_normal(3) for _ in range(int(rng.integers(2, 24)))]
            from latentgeo.trajectory import induce_trajectory

            rec = induce_trajectory(identity, manual_path(pts))
            rec.validate()
            assert rec.length >= rec.endpoint_distance - 1e-10
            assert abs(rec.excess - (rec.length - rec.endpoint_distance)) <= 1e-10
            assert abs(rec.tortuosity * (rec.endpoint_distance + 1e-8) - rec.length) \
                <= 1e-10 * max(1.0, rec.length)

        cfg = RunConfig(
            latent_dim=2, subspace_dim=2, seeds=(0,),
            conditions={
                "normal": GeneratorSpec(type="builtin", kind="linear",
                                        params={"latent_dim": 2}),
                "ood": GeneratorSpec(type="builtin", kind="curl_sampler",
                                     params={"latent_dim": 2, "swirl": 1.5}),
            },
            trajectory_pairs=100, trajectory_steps=20,
            out_dir=str(tmp_path / "curl"), jobs=1,
        )
        cfg_path = tmp_path / "curl.json"
        cfg.save(cfg_path)
        assert main(["trajectory", "--config", str(cfg_path)]) == 0
        with open(tmp_path / "curl" / "trajectory_summary.json") as fh:
            rows = {row["metric"]: row for row in json.load(fh)["rows"]}
        tau = rows["tortuosity"]
        assert tau["ratio_mean"] > 1.0, tau
        assert tau["frac"] > 0.5, tau


def test_criterion_7_monte_carlo_protocol(rng):
    with criterion(7, "Monte Carlo resampling protocol", 10.0):
        res = monte_carlo_ratio(np.ones(100), np.full(100, 1.2), n_mc=800,
                                fraction=0.8, seed=17)
        assert res.ratio_mean == 1.2
        assert res.ratio_std == 0.0

        a = rng.random(100) + 0.2
        b = a * (1.0 + 0.5 * rng.random(100))
        got = monte_carlo_ratio(a, b, n_mc=800, fraction=0.8, seed=23)
        oracle = oracle_monte_carlo(a, b, 800, 0.8, 23)
        assert got.ratio_mean == oracle[0]
        assert got.ratio_std == oracle[1]
        assert got.diff_mean == oracle[2]
        assert got.diff_std == oracle[3]
        assert got.skipped == oracle[4]


def test_criterion_8_imaging_identities(rng):
    with criterion(8, "imaging identities", 5.0):
        x = rng.standard_normal((2, 7, 7))
        y = rng.standard_normal((2, 7, 7))
        np.testing.assert_allclose(
            laplacian(1.5 * x - 2.0 * y), 1.5 * laplacian(x) - 2.0 * laplacian(y),
            atol=1e-10)
        assert np.all(laplacian(np.full((3, 5, 9), 4.2)) == 0.0)
        assert phfe(3.0 * x) == pytest.approx(9.0 * phfe(x), rel=1e-10)
        assert topk_share(np.array([4.0, 3.0, 2.0, 1.0]), 25.0, floor=0.0) == 0.4
        assert topk_share(np.array([1.0, 2.0, 4.0, 3.0]), 50.0, floor=0.0) == 0.7
        # uniform magnitude map: Top10 share is exactly one tenth
        assert topk_share(np.full(100, 1e6), 10.0) == 0.1
        impulse = np.zeros((1, 5, 5))
        impulse[0, 2, 2] = 1.0
        assert variance_energy(laplacian(impulse)) == pytest.approx(0.8, abs=1e-12)


def test_criterion_9_determinism_and_resumability(tmp_path):
    with criterion(9, "campaign determinism and resumability", 30.0):
        def cfg_for(path):
            return RunConfig(
                latent_dim=2, subspace_dim=2, seeds=tuple(range(20)),
                conditions={
                    "normal": GeneratorSpec(type="builtin", kind="saddle",
                                            params={"latent_dim": 2}),
                    "ood": GeneratorSpec(type="builtin", kind="saddle",
                                         params={"latent_dim": 2, "scale": 2.0}),
                },
                out_dir=str(path), jobs=1,
            )

        first = open(run_diagnose(cfg_for(tmp_path / "a")), "rb").read()
        second = open(run_diagnose(cfg_for(tmp_path / "b")), "rb").read()
        assert first == second

        killed = cfg_for(tmp_path / "c")

        class Kill(Exception):
            pass

        def bomb(index, total):
            if index == 17:
                raise Kill()

        with pytest.raises(Kill):
            run_diagnose(killed, progress_hook=bomb)
        with open(os.path.join(killed.out_dir, "records.jsonl"), "ab") as fh:
            fh.write(b'{"partial"')
        resumed = open(run_diagnose(killed), "rb").read()
        assert resumed == first

        records, errors = load_records(os.path.join(killed.out_dir, "records.jsonl"))
        assert len(records) == 40 and not errors
        for record in records:
            record.validate()


def test_criterion_10_protocol_conformance(rng):
    with criterion(10, "protocol conformance against the in-process mock", 5.0):
        from latentgeo.conformance import run_server_conformance
        from latentgeo.errors import (
            DimensionMismatchError,
            ServerDisconnectedError,
            VersionMismatchError,
        )
        from latentgeo.protocol import connect_external

        with MockServer(latent_dim=4, shape=(1, 2, 3)) as server:
            run_server_conformance(server.endpoint, pad_echo(4, (1, 2, 3)))
            with connect_external(server.endpoint) as gen:
                with pytest.raises(DimensionMismatchError):
                    gen.evaluate(np.zeros(5))
        with MockServer(reply_version=0) as server:
            with pytest.raises(VersionMismatchError):
                connect_external(server.endpoint)
        with MockServer(behavior="close_mid_response") as server:
            with connect_external(server.endpoint) as gen:
                with pytest.raises(ServerDisconnectedError):
                    gen.evaluate(np.zeros(4))
