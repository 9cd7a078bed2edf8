"""Campaign execution: seeded record computation, manifests, resumability.

A diagnose campaign processes (seed, condition) cells in sorted order. A
bounded worker pool may compute cells concurrently, but a single writer
appends records in the deterministic sorted order regardless of completion
order, so the JSONL bytes depend only on the configuration. The manifest
(config hash, tool version, per-record offsets) is rewritten atomically
after every appended record; on restart the record file is truncated to the
last manifest-confirmed offset, which drops any partial line left by a kill.
Timestamps never enter the manifest; they go to campaign.log.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .config import GeneratorSpec, RunConfig
from .errors import ConfigError, EvaluationError, ProtocolError
from .generators import FAMILY_KINDS, make_builtin
from .geometry import (
    GeometricRecord,
    eigendecompose,
    fd_jacobian,
    local_scaling,
    metric_tensor,
    neighborhood_analysis,
    principal_projection,
    sample_orthonormal_basis,
)
from .imaging import laplacian, phfe as phfe_energy, topk_hf_share, variance_energy
from .protocol import connect_external
from .trajectory import PairedComparison, TrajectoryRecord, build_path, induce_trajectory

# Stream salts for per-seed derived randomness.
LATENT_STREAM = 7
NEIGHBOR_STREAM = 3
ENDPOINT_A_STREAM = 21
ENDPOINT_B_STREAM = 22

RECORDS_FILENAME = "records.jsonl"
MANIFEST_FILENAME = "manifest.json"
LOG_FILENAME = "campaign.log"
TRAJECTORIES_FILENAME = "trajectories.jsonl"


def derive_seed(*key: int) -> int:
    """Collapse a stream key into one integer seed."""
    return int(np.random.SeedSequence(key).generate_state(1, np.uint64)[0])


def sample_latent(master_seed: int, seed: int, latent_dim: int) -> np.ndarray:
    """The probe point for a sample seed; independent of the condition so
    conditions stay paired."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(
        (master_seed, seed, LATENT_STREAM))))
    return rng.standard_normal(latent_dim)


class _GeneratorPool:
    """Resolves condition specs to generator instances.

    Family builtins instantiate per record seed (the seed selects the family
    member); everything else is constructed once and reused. External
    generators hold one connection; their evaluations serialize internally.
    """

    def __init__(self, conditions: dict[str, GeneratorSpec]):
        self._specs = conditions
        self._cache: dict[str, object] = {}

    def get(self, condition: str, seed: int):
        spec = self._specs[condition]
        if spec.type == "builtin" and spec.kind in FAMILY_KINDS:
            return make_builtin(spec.kind, spec.params, seed=seed)
        if condition not in self._cache:
            if spec.type == "builtin":
                self._cache[condition] = make_builtin(spec.kind, spec.params, seed=0)
            else:
                self._cache[condition] = connect_external(spec.endpoint, spec.timeout)
        return self._cache[condition]

    def concurrent_safe(self) -> bool:
        for condition in self._specs:
            gen = self.get(condition, seed=0)
            if not gen.descriptor.concurrent_safe:
                return False
        return True

    def close(self) -> None:
        for gen in self._cache.values():
            close = getattr(gen, "close", None)
            if close is not None:
                close()


def compute_record(generator, basis, cfg: RunConfig, seed: int, condition: str) -> GeometricRecord:
    """Run the full pointwise battery at the seeded probe point."""
    z = sample_latent(cfg.master_seed, seed, cfg.latent_dim)
    image = np.asarray(generator.evaluate(z), dtype=float)
    hfe = variance_energy(laplacian(image))
    topk = {
        "%g" % k: topk_hf_share(image, k) for k in cfg.topk_percents
    }
    jac = fd_jacobian(generator, z, basis, cfg.fd_epsilon)
    decomp = eigendecompose(metric_tensor(jac))
    ls = local_scaling(decomp, cfg.rank_tolerance)
    projection = principal_projection(jac, decomp)
    phfe_value = phfe_energy(projection, cfg.phfe_mode)
    analysis = neighborhood_analysis(
        generator,
        z,
        basis,
        decomp,
        neighbor_radius=cfg.neighbor_radius,
        neighbor_count=cfg.neighbor_count,
        epsilon=cfg.fd_epsilon,
        seed=derive_seed(cfg.master_seed, seed, NEIGHBOR_STREAM),
        floor=cfg.sis_floor,
    )
    flags = []
    if analysis.degenerate:
        flags.append("degenerate_spectrum")
    if ls == float("-inf"):
        flags.append("ls_underflow")
    return GeometricRecord(
        seed=seed,
        condition=condition,
        ls=ls,
        lc=analysis.lc,
        phfe=phfe_value,
        hfe=hfe,
        sis=analysis.profile.sis,
        coupling=[float(v) for v in analysis.profile.similarities],
        topk_hf=topk,
        flags=sorted(flags),
    )


@dataclass
class _Manifest:
    config_hash: str
    tool_version: str
    records: dict[str, dict]
    complete: bool = False

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
            "records": self.records,
            "complete": self.complete,
        }

    @classmethod
    def load(cls, path: str) -> "_Manifest | None":
        if not os.path.exists(path):
            return None
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        return cls(
            config_hash=payload.get("config_hash", ""),
            tool_version=payload.get("tool_version", ""),
            records=dict(payload.get("records", {})),
            complete=bool(payload.get("complete", False)),
        )

    def save(self, path: str) -> None:
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)


def _log(out_dir: str, message: str) -> None:
    with open(os.path.join(out_dir, LOG_FILENAME), "a", encoding="utf-8") as fh:
        fh.write(f"{time.time():.3f} {message}\n")


def _cells(cfg: RunConfig) -> list[tuple[int, str]]:
    return sorted((seed, cond) for seed in cfg.seeds for cond in cfg.conditions)


def run_diagnose(cfg: RunConfig, progress_hook=None) -> str:
    """Execute (or resume) a diagnose campaign; returns the records path.

    ``progress_hook(index, total)`` fires after each record is durably
    written and indexed; exceptions it raises abort the campaign exactly as
    a kill would, leaving a resumable state behind.
    """
    cfg.validate()
    os.makedirs(cfg.out_dir, exist_ok=True)
    records_path = os.path.join(cfg.out_dir, RECORDS_FILENAME)
    manifest_path = os.path.join(cfg.out_dir, MANIFEST_FILENAME)
    cells = _cells(cfg)
    keys = [f"{seed}|{condition}" for seed, condition in cells]

    manifest = _Manifest.load(manifest_path)
    if manifest is None:
        manifest = _Manifest(cfg.config_hash(), __version__, {})
        if os.path.exists(records_path):
            os.remove(records_path)
    elif manifest.config_hash != cfg.config_hash():
        raise ConfigError(
            "manifest belongs to a different configuration; "
            "remove the output directory or the manifest to restart"
        )

    done = 0
    offset = 0
    for key in keys:
        entry = manifest.records.get(key)
        if entry is None or entry["offset"] != offset:
            break
        offset += entry["length"]
        done += 1
    # drop indexing for any out-of-order leftovers and partial trailing lines
    manifest.records = {
        key: manifest.records[key] for key in keys[:done]
    }
    if os.path.exists(records_path):
        with open(records_path, "rb+") as fh:
            fh.truncate(offset)

    pool = _GeneratorPool(cfg.conditions)
    try:
        jobs = cfg.jobs if pool.concurrent_safe() else 1
        pending = cells[done:]
        basis = sample_orthonormal_basis(cfg.latent_dim, cfg.subspace_dim, cfg.master_seed)

        def work(cell):
            seed, condition = cell
            try:
                generator = pool.get(condition, seed)
                record = compute_record(generator, basis, cfg, seed, condition)
                return record.to_json_line()
            except EvaluationError as exc:
                return json.dumps(
                    {"seed": seed, "condition": condition, "error": str(exc)}
                )

        _log(cfg.out_dir, f"diagnose start: {len(pending)} of {len(cells)} cells to run")
        with open(records_path, "ab") as out:
            def write_line(index, line):
                nonlocal offset
                data = line.encode("utf-8") + b"\n"
                out.write(data)
                out.flush()
                key = keys[done + index]
                manifest.records[key] = {"offset": offset, "length": len(data)}
                offset += len(data)
                manifest.complete = len(manifest.records) == len(cells)
                manifest.save(manifest_path)
                if progress_hook is not None:
                    progress_hook(done + index, len(cells))

            if jobs > 1:
                with ThreadPoolExecutor(max_workers=jobs) as executor:
                    for index, line in enumerate(executor.map(work, pending)):
                        write_line(index, line)
            else:
                for index, cell in enumerate(pending):
                    write_line(index, work(cell))
        _log(cfg.out_dir, "diagnose finished")
    finally:
        pool.close()
    return records_path


def endpoint_pair(endpoint_seed: int, pair: int, latent_dim: int) -> tuple[np.ndarray, np.ndarray]:
    """The shared noise endpoints for one trial; identical across conditions."""
    rng_a = np.random.Generator(np.random.PCG64(np.random.SeedSequence(
        (endpoint_seed, pair, ENDPOINT_A_STREAM))))
    rng_b = np.random.Generator(np.random.PCG64(np.random.SeedSequence(
        (endpoint_seed, pair, ENDPOINT_B_STREAM))))
    return rng_a.standard_normal(latent_dim), rng_b.standard_normal(latent_dim)


PAIRED_METRICS = ("length", "tortuosity", "excess", "q90", "q95", "max_increment")


def run_trajectory(cfg: RunConfig) -> tuple[str, list[TrajectoryRecord], list[PairedComparison]]:
    """Induce paired trajectories for two conditions over shared endpoints.

    Writes one JSONL record per (pair, condition) plus a per-pair CSV and a
    paired Monte Carlo summary; returns them for programmatic use.
    """
    cfg.validate()
    if len(cfg.conditions) != 2:
        raise ConfigError("trajectory campaigns need exactly two conditions")
    os.makedirs(cfg.out_dir, exist_ok=True)
    names = list(cfg.conditions)
    pool = _GeneratorPool(cfg.conditions)
    records: list[TrajectoryRecord] = []
    path_out = os.path.join(cfg.out_dir, TRAJECTORIES_FILENAME)
    try:
        with open(path_out, "wb") as out:
            for pair in range(cfg.trajectory_pairs):
                z_a, z_b = endpoint_pair(cfg.endpoint_seed, pair, cfg.latent_dim)
                path = build_path(z_a, z_b, cfg.trajectory_steps)
                for condition in names:
                    generator = pool.get(condition, pair)
                    record = induce_trajectory(
                        generator, path, label=condition, pair_index=pair
                    )
                    record.validate()
                    records.append(record)
                    out.write(record.to_json_line().encode("utf-8") + b"\n")
    finally:
        pool.close()

    by_condition = {
        name: [r for r in records if r.condition == name] for name in names
    }
    comparisons = []
    base, other = names[0], names[1]
    for metric in PAIRED_METRICS:
        values_a = [getattr(r, metric) for r in by_condition[base]]
        values_b = [getattr(r, metric) for r in by_condition[other]]
        comparisons.append(
            PairedComparison.compute(
                metric, values_a, values_b,
                n_mc=cfg.n_mc, fraction=cfg.mc_fraction, seed=cfg.mc_seed,
            )
        )
    _write_pair_csv(cfg.out_dir, records)
    _write_summary(cfg.out_dir, base, other, comparisons)
    return path_out, records, comparisons


def _write_pair_csv(out_dir: str, records: list[TrajectoryRecord]) -> None:
    import csv

    with open(os.path.join(out_dir, "trajectory_pairs.csv"), "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pair", "condition", "L", "D", "tau", "E", "q90", "q95", "max"])
        for r in records:
            writer.writerow([
                r.pair_index, r.condition, repr(r.length), repr(r.endpoint_distance),
                repr(r.tortuosity), repr(r.excess), repr(r.q90), repr(r.q95),
                repr(r.max_increment),
            ])


def _write_summary(out_dir: str, base: str, other: str,
                   comparisons: list[PairedComparison]) -> None:
    import csv

    rows = []
    for comp in comparisons:
        rs = comp.resample
        rows.append({
            "metric": comp.metric,
            "baseline_condition": base,
            "other_condition": other,
            "ratio_mean": rs.ratio_mean,
            "ratio_std": rs.ratio_std,
            "diff_mean": rs.diff_mean,
            "diff_std": rs.diff_std,
            "frac": comp.frac,
            "skipped": rs.skipped,
        })
    with open(os.path.join(out_dir, "trajectory_summary.csv"), "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    with open(os.path.join(out_dir, "trajectory_summary.json"), "w",
              encoding="utf-8") as fh:
        json.dump({"quantile_estimator": "type-7 linear interpolation",
                   "rows": rows}, fh, indent=2)
        fh.write("\n")


def load_records(path: str) -> tuple[list[GeometricRecord], list[dict]]:
    """Validating reader: parses records, checks invariants, splits errors."""
    records, errors = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            payload = json.loads(line)
            if "error" in payload:
                errors.append(payload)
                continue
            record = GeometricRecord.from_json(payload)
            record.validate()
            records.append(record)
    return records, errors
