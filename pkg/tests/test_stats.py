import numpy as np
import pytest

from latentgeo.errors import ContractError, UndefinedStatisticError
from latentgeo.stats import (
    auroc,
    bootstrap_ci,
    correlation_drop,
    ood_score,
    spearman,
    subsampled_correlation,
    transfer_efficiency,
)


def oracle_fractional_ranks(values):
    """O(n^2) pairwise-counting ranks: 1 + #less + 0.5 * #equal-others."""
    values = list(values)
    ranks = []
    for i, v in enumerate(values):
        less = sum(1 for u in values if u < v)
        equal = sum(1 for j, u in enumerate(values) if u == v and j != i)
        ranks.append(1.0 + less + 0.5 * equal)
    return np.asarray(ranks)


def oracle_pearson(x, y):
    xc = x - x.mean()
    yc = y - y.mean()
    return float((xc @ yc) / np.sqrt((xc @ xc) * (yc @ yc)))


def oracle_spearman(x, y):
    return oracle_pearson(oracle_fractional_ranks(x), oracle_fractional_ranks(y))


def oracle_auroc(scores, labels):
    """O(n^2) pairwise wins with half credit for ties."""
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


class TestSpearman:
    def test_monotone(self):
        x = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        assert spearman(x, x**3) == pytest.approx(1.0, abs=1e-12)
        assert spearman(x, -x) == pytest.approx(-1.0, abs=1e-12)

    def test_tie_case_hand_value(self):
        # ranks (1, 2.5, 2.5, 4) vs (1, 2, 3, 4): Pearson = 3 / sqrt(10)
        value = spearman([1.0, 2.0, 2.0, 3.0], [1.0, 2.0, 3.0, 4.0])
        assert value == pytest.approx(3.0 / np.sqrt(10.0), abs=1e-14)

    def test_matches_pairwise_oracle_with_ties(self, rng):
        for _ in range(1000):
            n = int(rng.integers(2, 30))
            x = rng.integers(0, 6, size=n).astype(float)
            y = rng.integers(0, 6, size=n).astype(float)
            try:
                got = spearman(x, y)
            except UndefinedStatisticError:
                assert len(set(x)) == 1 or len(set(y)) == 1
                continue
            assert got == oracle_spearman(x, y)

    def test_invariant_under_increasing_transforms(self, rng):
        x = rng.standard_normal(40)
        y = rng.standard_normal(40)
        base = spearman(x, y)
        assert abs(spearman(np.exp(x), y) - base) < 1e-12
        assert abs(spearman(x, y**3) - base) < 1e-12
        assert abs(spearman(2.0 * x + 5.0, y) - base) < 1e-12

    def test_symmetric_and_bounded(self, rng):
        x, y = rng.standard_normal(25), rng.standard_normal(25)
        assert spearman(x, y) == spearman(y, x)
        assert -1.0 <= spearman(x, y) <= 1.0

    def test_zero_variance_rejected(self):
        with pytest.raises(UndefinedStatisticError):
            spearman([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


class TestSubsampledCorrelation:
    def test_perfect_monotone(self, rng):
        x = rng.standard_normal(100)
        summary = subsampled_correlation(x, 2 * x + 1, subsample_n=50, runs=10)
        assert summary.rho_mean == pytest.approx(1.0, abs=1e-12)
        assert summary.rho_std == pytest.approx(0.0, abs=1e-12)

    def test_degenerate_subsampling_equals_spearman(self, rng):
        x, y = rng.standard_normal(30), rng.standard_normal(30)
        summary = subsampled_correlation(x, y, subsample_n=30, runs=1, seed=4)
        assert summary.rho_mean == spearman(x, y)
        assert summary.ci_low is None and summary.ci_high is None

    def test_bit_identical_across_invocations(self, rng):
        x, y = rng.standard_normal(900), rng.standard_normal(900)
        a = subsampled_correlation(x, y, subsample_n=500, runs=10, seed=7)
        b = subsampled_correlation(x, y, subsample_n=500, runs=10, seed=7)
        assert a == b


class TestBootstrapCi:
    def test_all_equal(self):
        assert bootstrap_ci(np.full(10, 3.0), n_boot=50) == (3.0, 3.0)

    def test_level_nesting(self, rng):
        values = rng.standard_normal(40)
        lo95, hi95 = bootstrap_ci(values, n_boot=200, level=0.95, seed=3)
        lo99, hi99 = bootstrap_ci(values, n_boot=200, level=0.99, seed=3)
        assert lo99 <= lo95 <= hi95 <= hi99

    def test_deterministic(self, rng):
        values = rng.standard_normal(25)
        assert bootstrap_ci(values, seed=9) == bootstrap_ci(values, seed=9)

    def test_brackets_mean_for_symmetric_data(self, rng):
        for _ in range(10):
            values = rng.standard_normal(60)
            lo, hi = bootstrap_ci(values, n_boot=300, level=0.9,
                                  seed=int(rng.integers(0, 1000)))
            assert lo <= values.mean() <= hi


class TestAuroc:
    def test_perfect_separation(self):
        assert auroc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0

    def test_small_example(self):
        assert auroc([3.0, 1.0, 2.0, 0.0], [1, 1, 0, 0]) == 0.75

    def test_all_ties_is_chance(self):
        assert auroc([1.0] * 6, [1, 1, 1, 0, 0, 0]) == 0.5

    def test_matches_pairwise_oracle(self, rng):
        for _ in range(1000):
            n = int(rng.integers(2, 200))
            labels = rng.integers(0, 2, size=n)
            if labels.sum() in (0, n):
                labels[0] = 1 - labels[0]
            scores = rng.integers(0, 12, size=n).astype(float)
            assert auroc(scores, labels) == oracle_auroc(scores, labels)

    def test_invariant_under_increasing_transform(self, rng):
        scores = rng.standard_normal(80)
        labels = rng.integers(0, 2, size=80)
        labels[0], labels[1] = 0, 1
        assert auroc(np.exp(scores), labels) == pytest.approx(
            auroc(scores, labels), abs=1e-12)

    def test_single_class_rejected(self):
        with pytest.raises(ContractError):
            auroc([1.0, 2.0], [1, 1])

    def test_shuffled_labels_near_chance(self, rng):
        scores = rng.standard_normal(2000)
        labels = rng.permutation(np.repeat([0, 1], 1000))
        assert abs(auroc(scores, labels) - 0.5) <= 0.1


class TestRatios:
    def test_transfer_efficiency_reported_medians(self):
        eta = transfer_efficiency(0.0120, 158.506)
        assert eta == pytest.approx(7.571e-5, rel=1e-4)

    def test_transfer_efficiency_unit_and_floor(self):
        assert transfer_efficiency(0.75, 0.75) == 1.0
        assert transfer_efficiency(1.0, 0.0, floor=1e-12) == 1e12

    def test_correlation_drop_reported_value(self):
        assert correlation_drop(0.413, 0.083) == pytest.approx(-0.799, abs=5e-4)

    def test_correlation_drop_edges(self):
        assert correlation_drop(0.5, 0.5) == 0.0
        assert correlation_drop(0.5, 0.0) == -1.0
        with pytest.raises(UndefinedStatisticError):
            correlation_drop(0.0, 0.5)
        for r in (-0.8, -0.1, 0.3, 0.99):
            assert correlation_drop(r, r) == 0.0

    def test_ood_score(self):
        assert ood_score(2.0, 4.0) == 0.5
        assert ood_score(0.0, 123.0) == 0.0
        assert ood_score(1.0, 0.0, floor=1e-12) == 1e12

    def test_homogeneity(self, rng):
        for _ in range(20):
            lc = float(rng.random() + 0.1)
            phfe = float(rng.random() + 0.1)
            c = float(rng.random() * 5 + 0.5)
            assert ood_score(c * lc, phfe) == pytest.approx(
                c * ood_score(lc, phfe), rel=1e-12)
            assert transfer_efficiency(c * lc, phfe) == pytest.approx(
                c * transfer_efficiency(lc, phfe), rel=1e-12)
