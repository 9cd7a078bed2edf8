"""Noise-space slerp paths, induced-trajectory metrics, and resampling.

A path interpolates two latent endpoints on the great-circle arc; a
condition (any latent-to-latent generator) maps every path point to a
terminal vector, and the stepwise increments of that induced trajectory feed
the path metrics: cumulative length, endpoint distance, tortuosity, excess
length, and the upper-tail increment statistics.

Monte Carlo resampling protocol (part of the determinism contract): resample
``i`` draws ceil(fraction * n) paired indices with replacement from a
``numpy.random.Generator`` seeded with PCG64(SeedSequence((seed, i))), so
results are independent of evaluation order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionMismatchError, EvaluationError

#: Tortuosity denominator guard: tau = L / (D + eps).
TORTUOSITY_EPS = 1e-8

#: Interpolation steps (K), matching the step tables k = 0..19.
DEFAULT_STEPS = 20

#: Resampling defaults: resample count and per-resample sample fraction.
DEFAULT_N_MC = 800
DEFAULT_MC_FRACTION = 0.8

#: Angles closer than this to 0 or pi fall back to linear interpolation.
_SLERP_ANGLE_GUARD = 1e-6


def slerp(z_a, z_b, alpha: float) -> np.ndarray:
    """Spherical linear interpolation between two nonzero latent vectors.

    Degenerate angles (parallel or antiparallel endpoints) fall back to
    linear interpolation.
    """
    a = np.asarray(z_a, dtype=float).ravel()
    b = np.asarray(z_b, dtype=float).ravel()
    if a.shape != b.shape:
        raise DimensionMismatchError(f"endpoint lengths differ: {a.size} vs {b.size}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ContractError("slerp endpoints must be nonzero")
    omega = np.arccos(np.clip(a @ b / (na * nb), -1.0, 1.0))
    if omega < _SLERP_ANGLE_GUARD or omega > np.pi - _SLERP_ANGLE_GUARD:
        return (1.0 - alpha) * a + alpha * b
    sin_omega = np.sin(omega)
    return (np.sin((1.0 - alpha) * omega) / sin_omega) * a + (
        np.sin(alpha * omega) / sin_omega
    ) * b


@dataclass
class InterpolationPath:
    endpoints: tuple[np.ndarray, np.ndarray]
    alphas: np.ndarray
    points: list[np.ndarray]


def build_path(z_a, z_b, steps: int = DEFAULT_STEPS) -> InterpolationPath:
    """Discretize the slerp arc into K uniform steps (K+1 points)."""
    if steps < 1:
        raise ContractError(f"steps must be >= 1, got {steps}")
    a = np.asarray(z_a, dtype=float).ravel()
    b = np.asarray(z_b, dtype=float).ravel()
    alphas = np.arange(steps + 1) / steps
    points = [slerp(a, b, alpha) for alpha in alphas]
    return InterpolationPath(endpoints=(a, b), alphas=alphas, points=points)


@dataclass
class TrajectoryRecord:
    """Per endpoint-pair bundle of the induced-path statistics."""

    condition: str
    latents: list[np.ndarray]
    increments: np.ndarray
    length: float
    endpoint_distance: float
    tortuosity: float
    excess: float
    q90: float
    q95: float
    max_increment: float
    pair_index: int = -1

    def validate(self) -> None:
        inc = np.asarray(self.increments, dtype=float)
        if np.any(inc < 0):
            raise ContractError("increments must be nonnegative")
        if abs(self.length - inc.sum()) > 1e-10 * max(1.0, self.length):
            raise ContractError("length does not equal the increment sum")
        if self.length < self.endpoint_distance - 1e-10:
            raise ContractError("triangle inequality violated: L < D")
        if self.tortuosity < 0:
            raise ContractError("tortuosity must be nonnegative")
        if abs(self.excess - (self.length - self.endpoint_distance)) > 1e-10:
            raise ContractError("excess does not equal L - D")
        if not self.max_increment >= self.q95 >= self.q90:
            raise ContractError("tail statistics out of order")

    def to_json_line(self) -> str:
        payload = {
            "condition": self.condition,
            "pair_index": self.pair_index,
            "latents": [list(map(float, v)) for v in self.latents],
            "increments": [float(v) for v in self.increments],
            "length": self.length,
            "endpoint_distance": self.endpoint_distance,
            "tortuosity": self.tortuosity,
            "excess": self.excess,
            "q90": self.q90,
            "q95": self.q95,
            "max_increment": self.max_increment,
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, payload: dict) -> "TrajectoryRecord":
        return cls(
            condition=str(payload["condition"]),
            latents=[np.asarray(v, dtype=float) for v in payload["latents"]],
            increments=np.asarray(payload["increments"], dtype=float),
            length=float(payload["length"]),
            endpoint_distance=float(payload["endpoint_distance"]),
            tortuosity=float(payload["tortuosity"]),
            excess=float(payload["excess"]),
            q90=float(payload["q90"]),
            q95=float(payload["q95"]),
            max_increment=float(payload["max_increment"]),
            pair_index=int(payload.get("pair_index", -1)),
        )


def _type7_quantile(sorted_values: np.ndarray, q: float) -> float:
    pos = q * (sorted_values.size - 1)
    lo = int(np.floor(pos))
    hi = min(lo + 1, sorted_values.size - 1)
    frac = pos - lo
    return float(sorted_values[lo] + frac * (sorted_values[hi] - sorted_values[lo]))


def extremal_increments(increments) -> tuple[float, float, float]:
    """Upper-tail statistics (q90, q95, max) of the stepwise increments.

    Quantiles interpolate linearly between order statistics at position
    q * (n - 1), the standard type-7 estimator.
    """
    inc = np.asarray(increments, dtype=float).ravel()
    if inc.size < 1:
        raise ContractError("extremal_increments needs at least one increment")
    xs = np.sort(inc)
    return _type7_quantile(xs, 0.90), _type7_quantile(xs, 0.95), float(xs[-1])


def induce_trajectory(condition, path: InterpolationPath, label: str | None = None,
                      eps: float = TORTUOSITY_EPS, pair_index: int = -1) -> TrajectoryRecord:
    """Evaluate the condition at every path point and fill all path metrics.

    ``condition`` is any generator whose output flattens to the terminal
    vector h_c. Points evaluate in index order; a failure at step k raises
    EvaluationError carrying k.
    """
    latents = []
    for k, point in enumerate(path.points):
        try:
            out = np.asarray(condition.evaluate(point), dtype=float).ravel()
        except Exception as exc:
            raise EvaluationError(
                f"condition failed at trajectory step {k}: {exc}", step=k
            ) from exc
        if not np.all(np.isfinite(out)):
            raise EvaluationError(
                f"non-finite condition output at trajectory step {k}", step=k
            )
        latents.append(out)
    stacked = np.stack(latents)
    increments = np.linalg.norm(np.diff(stacked, axis=0), axis=1)
    length = float(increments.sum())
    distance = float(np.linalg.norm(stacked[-1] - stacked[0]))
    q90, q95, max_inc = extremal_increments(increments)
    return TrajectoryRecord(
        condition=label if label is not None else condition.descriptor.name,
        latents=latents,
        increments=increments,
        length=length,
        endpoint_distance=distance,
        tortuosity=length / (distance + eps),
        excess=length - distance,
        q90=q90,
        q95=q95,
        max_increment=max_inc,
        pair_index=pair_index,
    )


def paired_frac(values_a, values_b) -> float:
    """Fraction of index-paired trials where b strictly exceeds a."""
    a = np.asarray(values_a, dtype=float).ravel()
    b = np.asarray(values_b, dtype=float).ravel()
    if a.shape != b.shape:
        raise DimensionMismatchError(f"paired lengths differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise ContractError("paired_frac needs at least one pair")
    return float(np.mean(b > a))


def _spread(arr: np.ndarray) -> float:
    # population std; identical entries spread exactly zero (np.std would
    # pick up an ulp of rounding from the mean)
    if arr.size == 0 or np.all(arr == arr.flat[0]):
        return 0.0
    return float(arr.std())


def _center(arr: np.ndarray) -> float:
    # mean; exact for identical entries, where summation rounding would
    # otherwise shift the value by an ulp
    if arr.size and np.all(arr == arr.flat[0]):
        return float(arr.flat[0])
    return float(arr.mean())


@dataclass
class ResampleSummary:
    """Monte Carlo ratio/difference statistics across seeded resamples."""

    ratio_mean: float
    ratio_std: float
    diff_mean: float
    diff_std: float
    skipped: int
    n_mc: int
    fraction: float


def monte_carlo_ratio(values_a, values_b, n_mc: int = DEFAULT_N_MC,
                      fraction: float = DEFAULT_MC_FRACTION, seed: int = 0) -> ResampleSummary:
    """Resampled ratio-of-means and difference-of-means for paired values.

    Every resample draws ceil(fraction * n) paired indices with replacement;
    ratios are of resample means. Resamples whose mean of ``values_a`` is
    zero are skipped and tallied. Means and population stds are reported
    across the surviving resamples; constant inputs yield their ratio and
    difference exactly, with exactly zero spread.
    """
    a = np.asarray(values_a, dtype=float).ravel()
    b = np.asarray(values_b, dtype=float).ravel()
    if a.shape != b.shape:
        raise DimensionMismatchError(f"paired lengths differ: {a.size} vs {b.size}")
    if a.size < 1:
        raise ContractError("monte_carlo_ratio needs at least one pair")
    if not 0.0 < fraction <= 1.0:
        raise ContractError(f"fraction must lie in (0, 1], got {fraction}")
    draw = int(np.ceil(fraction * a.size))
    ratios, diffs = [], []
    skipped = 0
    for i in range(n_mc):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, i))))
        idx = rng.integers(0, a.size, size=draw)
        mean_a = _center(a[idx])
        mean_b = _center(b[idx])
        diffs.append(mean_b - mean_a)
        if mean_a == 0.0:
            skipped += 1
            continue
        ratios.append(mean_b / mean_a)
    ratios_arr = np.asarray(ratios)
    diffs_arr = np.asarray(diffs)
    return ResampleSummary(
        ratio_mean=_center(ratios_arr) if ratios_arr.size else float("nan"),
        ratio_std=_spread(ratios_arr) if ratios_arr.size else float("nan"),
        diff_mean=_center(diffs_arr),
        diff_std=_spread(diffs_arr),
        skipped=skipped,
        n_mc=n_mc,
        fraction=fraction,
    )


@dataclass
class PairedComparison:
    """Per-metric paired summary of two conditions sharing endpoint pairs."""

    metric: str
    values_a: np.ndarray
    values_b: np.ndarray
    frac: float
    resample: ResampleSummary = field(repr=False)

    @classmethod
    def compute(cls, metric: str, values_a, values_b, n_mc: int = DEFAULT_N_MC,
                fraction: float = DEFAULT_MC_FRACTION, seed: int = 0) -> "PairedComparison":
        a = np.asarray(values_a, dtype=float)
        b = np.asarray(values_b, dtype=float)
        return cls(
            metric=metric,
            values_a=a,
            values_b=b,
            frac=paired_frac(a, b),
            resample=monte_carlo_ratio(a, b, n_mc=n_mc, fraction=fraction, seed=seed),
        )
