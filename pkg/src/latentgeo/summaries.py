"""Post-hoc summaries computed from recorded campaign data.

These consume the JSONL record stream and produce the flat CSV/JSON tables:
per-condition rank correlations with cross-condition drops, the detection
result with raw-metric baselines, high-frequency transfer medians with the
paired efficiency shift, and single-sample heatmaps.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .campaign import sample_latent
from .config import RunConfig
from .errors import ContractError, PairingError
from .generators import FAMILY_KINDS, make_builtin
from .geometry import (
    GeometricRecord,
    eigendecompose,
    fd_jacobian,
    metric_tensor,
    principal_projection,
    sample_orthonormal_basis,
)
from .imaging import jacobian_norm_map, laplacian, normalize_heatmap, save_heatmap_png
from .protocol import connect_external
from .stats import (
    CorrelationSummary,
    DetectionResult,
    auroc,
    bootstrap_ci,
    correlation_drop,
    ood_score,
    subsampled_correlation,
    transfer_efficiency,
)

RECORD_METRICS = ("ls", "lc", "phfe", "hfe", "sis")


def _metric_column(records: list[GeometricRecord], metric: str) -> np.ndarray:
    if metric not in RECORD_METRICS:
        raise PairingError(
            f"unknown metric field {metric!r}; records carry {RECORD_METRICS}"
        )
    return np.array([getattr(r, metric) for r in records], dtype=float)


def _by_condition(records: list[GeometricRecord]) -> dict[str, list[GeometricRecord]]:
    grouped: dict[str, list[GeometricRecord]] = {}
    for record in records:
        grouped.setdefault(record.condition, []).append(record)
    return grouped


def correlate(records: list[GeometricRecord], pairs: list[tuple[str, str]],
              subsample_n: int = 0, runs: int = 10, seed: int = 0,
              baseline: str | None = None) -> dict:
    """Subsampled rank correlations per condition and metric pair, plus the
    relative drop of each pair from the baseline condition to the other."""
    grouped = _by_condition(records)
    if not grouped:
        raise PairingError("no records to correlate")
    conditions = sorted(grouped)
    if baseline is None:
        baseline = "normal" if "normal" in grouped else conditions[0]
    if baseline not in grouped:
        raise PairingError(f"baseline condition {baseline!r} absent from records")
    table: dict[str, dict[str, CorrelationSummary]] = {}
    for condition in conditions:
        rows = grouped[condition]
        n = subsample_n if subsample_n >= 2 else max(2, (3 * len(rows)) // 4)
        table[condition] = {}
        for mx, my in pairs:
            summary = subsampled_correlation(
                _metric_column(rows, mx), _metric_column(rows, my), n, runs, seed
            )
            table[condition][f"{mx}:{my}"] = summary
    drops = {}
    others = [c for c in conditions if c != baseline]
    for other in others:
        for mx, my in pairs:
            key = f"{mx}:{my}"
            drops[f"{baseline}->{other}:{key}"] = correlation_drop(
                table[baseline][key].rho_mean, table[other][key].rho_mean
            )
    return {
        "baseline": baseline,
        "correlations": {
            cond: {key: s.to_dict() for key, s in summaries.items()}
            for cond, summaries in table.items()
        },
        "drops": drops,
    }


def write_correlations(result: dict, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "correlations.json"), "w", encoding="utf-8") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "correlations.csv"), "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["condition", "pair", "rho_mean", "rho_std", "ci_low",
                         "ci_high", "runs", "subsample_n", "skipped"])
        for condition in sorted(result["correlations"]):
            for pair, s in sorted(result["correlations"][condition].items()):
                writer.writerow([
                    condition, pair, repr(s["rho_mean"]), repr(s["rho_std"]),
                    repr(s["ci_low"]), repr(s["ci_high"]), s["runs"],
                    s["subsample_size"], s["skipped"],
                ])
        for key, value in sorted(result["drops"].items()):
            writer.writerow(["drop", key, repr(value), "", "", "", "", "", ""])


def detect_ood(records: list[GeometricRecord], positive_label: str = "ood") -> DetectionResult:
    """Score every record with the efficiency ratio and grade separability.

    The condition label is the ground truth; raw LC and raw LS AUROCs are
    reported as baselines alongside.
    """
    grouped = _by_condition(records)
    if len(grouped) < 2:
        raise ContractError("OOD detection needs records from two conditions")
    if positive_label not in grouped:
        raise PairingError(f"positive condition {positive_label!r} absent from records")
    scores = [ood_score(r.lc, r.phfe) for r in records]
    labels = [r.condition for r in records]
    truth = [label == positive_label for label in labels]
    return DetectionResult(
        auroc=auroc(scores, truth),
        scores=[float(s) for s in scores],
        labels=labels,
        baselines={
            "lc_raw": auroc([r.lc for r in records], truth),
            "ls_raw": auroc([r.ls for r in records], truth),
        },
    )


def write_detection(result: DetectionResult, records: list[GeometricRecord],
                    out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "ood.json"), "w", encoding="utf-8") as fh:
        json.dump(result.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "ood_scores.csv"), "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "condition", "score", "lc", "ls", "phfe"])
        for record, score in zip(records, result.scores):
            writer.writerow([record.seed, record.condition, repr(score),
                             repr(record.lc), repr(record.ls), repr(record.phfe)])


def hf_transfer(records: list[GeometricRecord], n_boot: int = 1000,
                seed: int = 0) -> dict:
    """Per-condition medians of the high-frequency battery plus the paired
    transfer-efficiency shift with a bootstrap interval.

    Seeds must pair exactly across the two conditions; orphans are an error.
    """
    grouped = _by_condition(records)
    if len(grouped) != 2:
        raise PairingError("hf-transfer needs exactly two conditions")
    names = sorted(grouped)
    base = "normal" if "normal" in grouped else names[0]
    other = [n for n in names if n != base][0]
    seeds_base = {r.seed for r in grouped[base]}
    seeds_other = {r.seed for r in grouped[other]}
    orphans = sorted(seeds_base.symmetric_difference(seeds_other))
    if orphans:
        raise PairingError(f"unpaired seeds across conditions: {orphans}")

    topk_keys = sorted(
        {k for r in records for k in r.topk_hf}, key=float
    )
    summary = {"baseline": base, "other": other, "medians": {}}
    for name in names:
        rows = grouped[name]
        medians = {
            "phfe": float(np.median([r.phfe for r in rows])),
            "hfe": float(np.median([r.hfe for r in rows])),
            "eta": float(np.median([
                transfer_efficiency(r.hfe, r.phfe) for r in rows
            ])),
        }
        for key in topk_keys:
            medians[f"top{key}_hf"] = float(np.median([r.topk_hf[key] for r in rows]))
        summary["medians"][name] = medians

    paired_base = {r.seed: r for r in grouped[base]}
    paired_other = {r.seed: r for r in grouped[other]}
    delta_eta = np.array([
        transfer_efficiency(paired_other[s].hfe, paired_other[s].phfe)
        - transfer_efficiency(paired_base[s].hfe, paired_base[s].phfe)
        for s in sorted(paired_base)
    ])
    ci_low, ci_high = bootstrap_ci(delta_eta, n_boot=n_boot, seed=seed)
    summary["delta_eta"] = {
        "mean": float(delta_eta.mean()),
        "ci_low": ci_low,
        "ci_high": ci_high,
        "n_boot": n_boot,
    }
    return summary


def write_hf_transfer(summary: dict, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "hf_transfer.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    columns = sorted({k for m in summary["medians"].values() for k in m})
    with open(os.path.join(out_dir, "hf_transfer.csv"), "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["condition"] + columns)
        for condition in sorted(summary["medians"]):
            medians = summary["medians"][condition]
            writer.writerow([condition] + [repr(medians[c]) for c in columns])
        delta = summary["delta_eta"]
        writer.writerow(["delta_eta", repr(delta["mean"]),
                         repr(delta["ci_low"]), repr(delta["ci_high"])]
                        + [""] * (len(columns) - 3))


def heatmaps_for_sample(cfg: RunConfig, seed: int, condition: str, out_dir: str) -> dict:
    """Write the Jacobian-norm and |laplacian(P1)| heatmaps for one sample.

    Each map is dumped as a lossless PNG plus a raw CSV of normalized values;
    returns the output paths.
    """
    spec = cfg.conditions.get(condition)
    if spec is None:
        raise PairingError(f"condition {condition!r} not in configuration")
    if spec.type == "builtin":
        member_seed = seed if spec.kind in FAMILY_KINDS else 0
        generator = make_builtin(spec.kind, spec.params, seed=member_seed)
    else:
        generator = connect_external(spec.endpoint, spec.timeout)
    basis = sample_orthonormal_basis(cfg.latent_dim, cfg.subspace_dim, cfg.master_seed)
    z = sample_latent(cfg.master_seed, seed, cfg.latent_dim)
    jac = fd_jacobian(generator, z, basis, cfg.fd_epsilon)
    decomp = eigendecompose(metric_tensor(jac))
    shape = generator.descriptor.output_shape
    norm_map = jacobian_norm_map(jac, shape)
    projection = principal_projection(jac, decomp)
    hf_map = normalize_heatmap(np.abs(laplacian(projection)).mean(axis=0))

    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for name, heatmap in (("jacobian_norm", norm_map), ("phfe", hf_map)):
        png = os.path.join(out_dir, f"{name}_s{seed}_{condition}.png")
        csv_path = os.path.join(out_dir, f"{name}_s{seed}_{condition}.csv")
        save_heatmap_png(heatmap, png)
        heatmap.to_csv(csv_path)
        paths[name] = {"png": png, "csv": csv_path}
    close = getattr(generator, "close", None)
    if close is not None:
        close()
    return paths
