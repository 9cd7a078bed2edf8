"""Rank correlation, bootstrap intervals, detection scores, and ratios.

Two distinct resampling protocols coexist and are kept named apart:
subsampled correlation draws *without* replacement (a subsample of a pool),
while the bootstrap and the trajectory Monte Carlo draw *with* replacement.
Per-run seeds derive from SeedSequence((seed, run)), so parallel evaluation
order cannot change any result.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import ContractError, DimensionMismatchError, UndefinedStatisticError

#: Denominator guard for the ratio scores.
RATIO_FLOOR = 1e-12

DEFAULT_BOOTSTRAP_RESAMPLES = 1000
DEFAULT_CI_LEVEL = 0.95


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc @ xc) * (yc @ yc))
    if denom == 0:
        raise UndefinedStatisticError("zero variance leaves correlation undefined")
    return float((xc @ yc) / denom)


def spearman(x, y) -> float:
    """Spearman rank correlation with fractional (tie-averaged) ranks."""
    xa = np.asarray(x, dtype=float).ravel()
    ya = np.asarray(y, dtype=float).ravel()
    if xa.shape != ya.shape:
        raise DimensionMismatchError(f"lengths differ: {xa.size} vs {ya.size}")
    if xa.size < 2:
        raise ContractError("spearman needs at least two observations")
    if not (np.all(np.isfinite(xa)) and np.all(np.isfinite(ya))):
        raise ContractError("spearman inputs must be finite")
    return _pearson(rankdata(xa, method="average"), rankdata(ya, method="average"))


@dataclass
class CorrelationSummary:
    """Mean and spread of the rank correlation across subsampling runs.

    Both dispersion measures are emitted and labeled: ``rho_std`` is the
    population std across runs; (``ci_low``, ``ci_high``) is a percentile
    bootstrap interval on the mean of the per-run correlations.
    """

    rho_mean: float
    rho_std: float
    runs: int
    subsample_size: int
    ci_low: float | None = None
    ci_high: float | None = None
    skipped: int = 0

    def to_dict(self) -> dict:
        return {
            "rho_mean": self.rho_mean,
            "rho_std": self.rho_std,
            "runs": self.runs,
            "subsample_size": self.subsample_size,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "skipped": self.skipped,
        }


def subsampled_correlation(pool_x, pool_y, subsample_n: int, runs: int,
                           seed: int = 0) -> CorrelationSummary:
    """Mean +/- std of Spearman rho over seeded subsampling runs.

    Each run draws subsample_n indices without replacement (run r uses
    SeedSequence((seed, r))). Runs hitting zero rank variance are skipped
    and tallied.
    """
    xa = np.asarray(pool_x, dtype=float).ravel()
    ya = np.asarray(pool_y, dtype=float).ravel()
    if xa.shape != ya.shape:
        raise DimensionMismatchError(f"pool lengths differ: {xa.size} vs {ya.size}")
    if not 2 <= subsample_n <= xa.size:
        raise ContractError(
            f"subsample_n must lie in [2, {xa.size}], got {subsample_n}"
        )
    if runs < 1:
        raise ContractError("runs must be >= 1")
    rhos = []
    skipped = 0
    for run in range(runs):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, run))))
        idx = rng.permutation(xa.size)[:subsample_n]
        try:
            rhos.append(spearman(xa[idx], ya[idx]))
        except UndefinedStatisticError:
            skipped += 1
    if not rhos:
        raise UndefinedStatisticError("every subsampling run had zero rank variance")
    arr = np.asarray(rhos)
    ci_low = ci_high = None
    if arr.size >= 2:
        ci_low, ci_high = bootstrap_ci(arr, seed=seed)
    return CorrelationSummary(
        rho_mean=float(arr.mean()),
        rho_std=float(arr.std()),
        runs=runs,
        subsample_size=subsample_n,
        ci_low=ci_low,
        ci_high=ci_high,
        skipped=skipped,
    )


def bootstrap_ci(values, n_boot: int = DEFAULT_BOOTSTRAP_RESAMPLES,
                 level: float = DEFAULT_CI_LEVEL, seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval on the mean.

    Resample b uses SeedSequence((seed, b)) and draws n indices with
    replacement; the interval takes the ((1-level)/2, 1-(1-level)/2)
    type-7 quantiles of the resampled means.
    """
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size < 2:
        raise ContractError("bootstrap_ci needs at least two values")
    if not 0.0 < level < 1.0:
        raise ContractError(f"level must lie in (0, 1), got {level}")
    means = np.empty(n_boot)
    for b in range(n_boot):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, b))))
        means[b] = arr[rng.integers(0, arr.size, size=arr.size)].mean()
    tail = (1.0 - level) / 2.0
    low, high = np.quantile(means, [tail, 1.0 - tail], method="linear")
    return float(low), float(high)


def auroc(scores, labels) -> float:
    """Probability a random positive outscores a random negative.

    Computed with the rank (Mann-Whitney) formula over tie-averaged ranks,
    which credits ties 0.5, in O(n log n).
    """
    s = np.asarray(scores, dtype=float).ravel()
    lab = np.asarray(labels).ravel()
    if s.shape != lab.shape:
        raise DimensionMismatchError(f"lengths differ: {s.size} vs {lab.size}")
    pos = lab.astype(bool)
    n_pos = int(pos.sum())
    n_neg = int(s.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ContractError("auroc needs at least one positive and one negative")
    ranks = rankdata(s, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def transfer_efficiency(hfe_image: float, phfe_latent: float,
                        floor: float = RATIO_FLOOR) -> float:
    """Image-detail yield per unit of projected latent energy."""
    if hfe_image < 0 or phfe_latent < 0:
        raise ContractError("energies must be nonnegative")
    return hfe_image / max(phfe_latent, floor)


def correlation_drop(rho_normal: float, rho_ood: float) -> float:
    """Relative change of the correlation between conditions."""
    if rho_normal == 0:
        raise UndefinedStatisticError("baseline correlation of zero has no drop")
    return (rho_ood - rho_normal) / rho_normal


def ood_score(lc: float, phfe: float, floor: float = RATIO_FLOOR) -> float:
    """Geometric efficiency ratio used as a per-sample anomaly score."""
    if lc < 0 or phfe < 0:
        raise ContractError("lc and phfe must be nonnegative")
    return lc / max(phfe, floor)


@dataclass
class DetectionResult:
    """AUROC of the efficiency-ratio detector plus raw-metric baselines."""

    auroc: float
    scores: list[float]
    labels: list[str]
    baselines: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "auroc": self.auroc,
            "baselines": self.baselines,
            "scores": self.scores,
            "labels": self.labels,
        }
