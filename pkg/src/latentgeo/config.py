"""Run configuration: a single self-describing JSON document.

``latentgeo config init`` emits the full default document so every constant
that matters to a campaign is visible and versioned. Seeds identify samples;
the master seed controls the shared probe basis and all derived streams.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

from .errors import ConfigError
from .geometry import (
    DEFAULT_FD_EPSILON,
    DEFAULT_NEIGHBOR_COUNT,
    DEFAULT_NEIGHBOR_RADIUS,
    RANK_TOLERANCE,
    SIS_FLOOR,
)
from .trajectory import DEFAULT_MC_FRACTION, DEFAULT_N_MC, DEFAULT_STEPS


@dataclass
class GeneratorSpec:
    type: str  # "builtin" | "external"
    kind: str = ""
    params: dict = field(default_factory=dict)
    endpoint: str = ""
    timeout: float = 10.0

    def to_dict(self) -> dict:
        if self.type == "builtin":
            return {"type": "builtin", "kind": self.kind, "params": self.params}
        return {"type": "external", "endpoint": self.endpoint, "timeout": self.timeout}

    @classmethod
    def from_dict(cls, payload: dict) -> "GeneratorSpec":
        kind = payload.get("type")
        if kind == "builtin":
            return cls(type="builtin", kind=payload.get("kind", ""),
                       params=dict(payload.get("params", {})))
        if kind == "external":
            endpoint = payload.get("endpoint", "")
            if not endpoint:
                raise ConfigError("external generator spec needs an endpoint")
            return cls(type="external", endpoint=endpoint,
                       timeout=float(payload.get("timeout", 10.0)))
        raise ConfigError(f"generator spec type must be builtin or external, got {kind!r}")


@dataclass
class RunConfig:
    latent_dim: int = 2
    subspace_dim: int = 2
    fd_epsilon: float = DEFAULT_FD_EPSILON
    neighbor_radius: float = DEFAULT_NEIGHBOR_RADIUS
    neighbor_count: int = DEFAULT_NEIGHBOR_COUNT
    rank_tolerance: float = RANK_TOLERANCE
    sis_floor: float = SIS_FLOOR
    phfe_mode: str = "variance"
    topk_percents: tuple[float, ...] = (5.0, 10.0, 15.0, 20.0)
    master_seed: int = 0
    seeds: tuple[int, ...] = tuple(range(100))
    conditions: dict[str, GeneratorSpec] = field(default_factory=dict)
    trajectory_steps: int = DEFAULT_STEPS
    trajectory_pairs: int = 100
    endpoint_seed: int = 0
    n_mc: int = DEFAULT_N_MC
    mc_fraction: float = DEFAULT_MC_FRACTION
    mc_seed: int = 0
    subsample_n: int = 0  # 0 means: use 3/4 of the pool
    correlation_runs: int = 10
    correlation_seed: int = 0
    out_dir: str = "runs/campaign"
    jobs: int = 1

    def validate(self) -> None:
        if self.latent_dim < 1 or self.subspace_dim < 1:
            raise ConfigError("latent_dim and subspace_dim must be positive")
        if self.subspace_dim > self.latent_dim:
            raise ConfigError("subspace_dim cannot exceed latent_dim")
        for name in ("fd_epsilon", "neighbor_radius", "sis_floor", "rank_tolerance",
                     "mc_fraction"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("neighbor_count", "trajectory_steps", "trajectory_pairs",
                     "n_mc", "correlation_runs", "jobs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not self.seeds:
            raise ConfigError("seed list is empty")
        if self.phfe_mode not in ("variance", "mav"):
            raise ConfigError("phfe_mode must be 'variance' or 'mav'")
        if not self.conditions:
            raise ConfigError("at least one condition must be configured")

    def to_dict(self) -> dict[str, Any]:
        return {
            "latent_dim": self.latent_dim,
            "subspace_dim": self.subspace_dim,
            "fd_epsilon": self.fd_epsilon,
            "neighbor_radius": self.neighbor_radius,
            "neighbor_count": self.neighbor_count,
            "rank_tolerance": self.rank_tolerance,
            "sis_floor": self.sis_floor,
            "phfe_mode": self.phfe_mode,
            "topk_percents": list(self.topk_percents),
            "master_seed": self.master_seed,
            "seeds": {"list": list(self.seeds)},
            "conditions": {name: spec.to_dict() for name, spec in self.conditions.items()},
            "trajectory": {
                "steps": self.trajectory_steps,
                "pairs": self.trajectory_pairs,
                "endpoint_seed": self.endpoint_seed,
            },
            "resampling": {
                "n_mc": self.n_mc,
                "fraction": self.mc_fraction,
                "seed": self.mc_seed,
            },
            "correlation": {
                "subsample_n": self.subsample_n,
                "runs": self.correlation_runs,
                "seed": self.correlation_seed,
            },
            "out_dir": self.out_dir,
            "jobs": self.jobs,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RunConfig":
        try:
            seeds_spec = payload.get("seeds", {"start": 0, "count": 100})
            if "list" in seeds_spec:
                seeds = tuple(int(s) for s in seeds_spec["list"])
            else:
                start = int(seeds_spec.get("start", 0))
                count = int(seeds_spec.get("count", 0))
                seeds = tuple(range(start, start + count))
            trajectory = payload.get("trajectory", {})
            resampling = payload.get("resampling", {})
            correlation = payload.get("correlation", {})
            cfg = cls(
                latent_dim=int(payload.get("latent_dim", 2)),
                subspace_dim=int(payload.get("subspace_dim", 2)),
                fd_epsilon=float(payload.get("fd_epsilon", DEFAULT_FD_EPSILON)),
                neighbor_radius=float(payload.get("neighbor_radius", DEFAULT_NEIGHBOR_RADIUS)),
                neighbor_count=int(payload.get("neighbor_count", DEFAULT_NEIGHBOR_COUNT)),
                rank_tolerance=float(payload.get("rank_tolerance", RANK_TOLERANCE)),
                sis_floor=float(payload.get("sis_floor", SIS_FLOOR)),
                phfe_mode=str(payload.get("phfe_mode", "variance")),
                topk_percents=tuple(float(k) for k in payload.get("topk_percents", (5, 10, 15, 20))),
                master_seed=int(payload.get("master_seed", 0)),
                seeds=seeds,
                conditions={
                    str(name): GeneratorSpec.from_dict(spec)
                    for name, spec in payload.get("conditions", {}).items()
                },
                trajectory_steps=int(trajectory.get("steps", DEFAULT_STEPS)),
                trajectory_pairs=int(trajectory.get("pairs", 100)),
                endpoint_seed=int(trajectory.get("endpoint_seed", 0)),
                n_mc=int(resampling.get("n_mc", DEFAULT_N_MC)),
                mc_fraction=float(resampling.get("fraction", DEFAULT_MC_FRACTION)),
                mc_seed=int(resampling.get("seed", 0)),
                subsample_n=int(correlation.get("subsample_n", 0)),
                correlation_runs=int(correlation.get("runs", 10)),
                correlation_seed=int(correlation.get("seed", 0)),
                out_dir=str(payload.get("out_dir", "runs/campaign")),
                jobs=int(payload.get("jobs", 1)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed configuration: {exc}") from exc
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        return cls.from_dict(payload)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def default_config(kind: str = "saddle") -> RunConfig:
    """The document ``config init`` emits: every constant, spelled out.

    The probed subspace defaults to 16 dimensions, clamped to the latent
    dimension of the scaffolded generator.
    """
    from .geometry import DEFAULT_SUBSPACE_DIM

    if kind in ("coupled_family", "decoupled_family"):
        latent_dim = 3
        conditions = {
            "normal": GeneratorSpec(type="builtin", kind="coupled_family", params={"image_size": 8}),
            "ood": GeneratorSpec(type="builtin", kind="decoupled_family", params={"image_size": 8}),
        }
    else:
        latent_dim = 2
        conditions = {
            "normal": GeneratorSpec(type="builtin", kind=kind, params={"latent_dim": 2}),
            "ood": GeneratorSpec(type="builtin", kind=kind,
                                 params={"latent_dim": 2, "scale": 2.0}),
        }
    return RunConfig(
        latent_dim=latent_dim,
        subspace_dim=min(DEFAULT_SUBSPACE_DIM, latent_dim),
        conditions=conditions,
    )
