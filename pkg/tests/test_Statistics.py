import itertools
import math

import numpy as np
import pytest
from scipy import stats

from hdea.Statistics import (
    confidence_band,
    signed_rank_distribution,
    summarize,
    welch_t_test,
    wilcoxon_signed_rank,
)
from hdea.errors import StatisticsError
from hdea.utils import make_rng


def enumerated_signed_rank_p(differences, alternative="two-sided"):
    """p of W+ by listing every sign assignment of the ranks."""
    ranks = stats.rankdata(np.abs(differences))
    observed = ranks[differences > 0].sum()
    signs = np.array(list(itertools.product((0, 1), repeat=len(ranks))))
    sums = signs @ ranks
    upper = np.mean(sums >= observed - 1e-9)
    lower = np.mean(sums <= observed + 1e-9)
    if alternative == "greater":
        return upper
    if alternative == "less":
        return lower
    return min(1.0, 2 * min(upper, lower))


class TestSummarize:
    def test_small_sample(self):
        summary = summarize([1.0, 2.0, 3.0])
        assert summary.n == 3
        assert summary.mean == 2.0
        assert summary.sd == 1.0
        assert summary.median == 2.0
        assert summary.min == 1.0 and summary.max == 3.0
        assert summary.kurtosis == pytest.approx(1.5)

    def test_constant_sample_has_no_kurtosis(self):
        summary = summarize([4.0] * 5)
        assert summary.sd == 0.0
        assert math.isnan(summary.kurtosis)

    def test_single_value(self):
        summary = summarize([7.0])
        assert summary.mean == 7.0
        assert math.isnan(summary.sd)

    def test_normal_kurtosis_is_about_three(self):
        summary = summarize(make_rng(1).normal(size=100_000))
        assert summary.kurtosis == pytest.approx(3.0, abs=0.1)
        assert summary.min <= summary.median <= summary.max

    def test_rejects_empty_and_non_finite(self):
        with pytest.raises(StatisticsError):
            summarize([])
        with pytest.raises(StatisticsError):
            summarize([1.0, float("nan")])


class TestWelch:
    def test_identical_samples(self):
        result = welch_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert result.statistic == 0.0
        assert result.p_value == pytest.approx(1.0)

    def test_clear_separation(self):
        rng = make_rng(2)
        result = welch_t_test(rng.normal(10, 1, 30), rng.normal(0, 1, 30))
        assert result.p_value < 1e-6
        assert result.statistic > 0
        assert result.method == "welch-t"

    @pytest.mark.parametrize("alternative", ["two-sided", "greater", "less"])
    def test_agrees_with_scipy(self, alternative):
        rng = make_rng(3)
        xs, ys = rng.normal(0.3, 1.0, 12), rng.normal(0.0, 2.0, 17)
        ours = welch_t_test(xs, ys, alternative)
        theirs = stats.ttest_ind(xs, ys, equal_var=False, alternative=alternative)
        assert ours.statistic == pytest.approx(theirs.statistic, rel=1e-10)
        assert ours.p_value == pytest.approx(theirs.pvalue, rel=1e-8)

    def test_swapping_samples(self):
        rng = make_rng(4)
        xs, ys = rng.normal(1, 1, 10), rng.normal(0, 1, 10)
        forward, backward = welch_t_test(xs, ys), welch_t_test(ys, xs)
        assert forward.p_value == pytest.approx(backward.p_value)
        assert forward.statistic == pytest.approx(-backward.statistic)
        assert forward.effect == pytest.approx(-backward.effect)

    def test_p_shrinks_as_the_shift_grows(self):
        base = make_rng(5).normal(0, 1, 20)
        noise = make_rng(6).normal(0, 1, 20)
        p_values = [
            welch_t_test(noise + shift, base, "greater").p_value for shift in (0.0, 0.5, 1.0, 2.0, 4.0)
        ]
        assert p_values == sorted(p_values, reverse=True)

    def test_agrees_with_a_permutation_test(self):
        rng = make_rng(7)
        xs, ys = rng.normal(0.6, 1.0, 10), rng.normal(0.0, 1.0, 10)
        observed = abs(welch_t_test(xs, ys).statistic)
        pooled = np.concatenate([xs, ys])
        shuffled = rng.permuted(np.tile(pooled, (50_000, 1)), axis=1)
        a, b = shuffled[:, :10], shuffled[:, 10:]
        t = (a.mean(axis=1) - b.mean(axis=1)) / np.sqrt(
            a.var(axis=1, ddof=1) / 10 + b.var(axis=1, ddof=1) / 10
        )
        permutation_p = np.mean(np.abs(t) >= observed - 1e-12)
        assert welch_t_test(xs, ys).p_value == pytest.approx(permutation_p, abs=0.02)

    def test_zero_variance(self):
        equal = welch_t_test([2.0, 2.0], [2.0, 2.0])
        assert equal.p_value == 1.0
        shifted = welch_t_test([3.0, 3.0], [2.0, 2.0])
        assert shifted.statistic == math.inf
        assert shifted.p_value == 0.0
        assert welch_t_test([3.0, 3.0], [2.0, 2.0], "less").p_value == 1.0

    def test_needs_two_values_per_sample(self):
        with pytest.raises(StatisticsError):
            welch_t_test([1.0], [1.0, 2.0])

    def test_unknown_alternative(self):
        with pytest.raises(StatisticsError):
            welch_t_test([1.0, 2.0], [1.0, 2.0], "bigger")


class TestWilcoxon:
    def test_no_differences(self):
        result = wilcoxon_signed_rank([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert result.p_value == 1.0
        assert result.statistic == 0.0
        assert result.n == 0

    def test_five_positive_pairs(self):
        result = wilcoxon_signed_rank([2.0, 3.0, 4.0, 5.0, 6.0], [1.0, 1.0, 1.0, 1.0, 1.0])
        assert result.statistic == 15.0
        assert result.p_value == pytest.approx(0.0625)
        assert result.n == 5
        assert result.method == "wilcoxon-signed-rank-exact"

    def test_zero_differences_are_dropped(self):
        result = wilcoxon_signed_rank([1.0, 2.0, 5.0], [1.0, 1.0, 1.0])
        assert result.n == 2

    def test_distribution_counts(self):
        counts = signed_rank_distribution([2, 4, 6])
        assert counts.sum() == 8
        assert counts.tolist() == [1, 0, 1, 0, 1, 0, 2, 0, 1, 0, 1, 0, 1]

    @pytest.mark.parametrize("alternative", ["two-sided", "greater", "less"])
    def test_matches_full_enumeration(self, alternative):
        rng = make_rng(8)
        for _ in range(100):
            n = int(rng.integers(1, 13))
            differences = np.round(rng.normal(0.3, 1.0, n), 1)
            differences[differences == 0] = 0.5
            result = wilcoxon_signed_rank(differences, np.zeros(n), alternative)
            assert result.p_value == pytest.approx(
                enumerated_signed_rank_p(differences, alternative), abs=1e-12
            )

    def test_agrees_with_scipy_exact(self):
        rng = make_rng(9)
        xs, ys = rng.normal(0.5, 1.0, 10), rng.normal(0.0, 1.0, 10)
        ours = wilcoxon_signed_rank(xs, ys)
        theirs = stats.wilcoxon(xs, ys)
        assert ours.p_value == pytest.approx(theirs.pvalue, rel=1e-9)

    def test_normal_approximation_for_large_samples(self):
        differences = np.arange(1, 31) * np.where(np.arange(30) % 3 == 0, -1.0, 1.0)
        result = wilcoxon_signed_rank(differences, np.zeros(30))
        n = 30
        mean = n * (n + 1) / 4
        sd = math.sqrt(n * (n + 1) * (2 * n + 1) / 24)
        z = (abs(result.statistic - mean) - 0.5) / sd
        assert result.method == "wilcoxon-signed-rank-normal"
        assert result.p_value == pytest.approx(2 * stats.norm.sf(z))

    def test_swapping_samples(self):
        rng = make_rng(10)
        xs, ys = rng.normal(0.2, 1, 15), rng.normal(0, 1, 15)
        forward, backward = wilcoxon_signed_rank(xs, ys), wilcoxon_signed_rank(ys, xs)
        assert forward.p_value == pytest.approx(backward.p_value)
        assert forward.effect == -backward.effect

    def test_rejects_unpaired_samples(self):
        with pytest.raises(StatisticsError):
            wilcoxon_signed_rank([1.0, 2.0], [1.0])


class TestConfidenceBand:
    def test_identical_curves_have_zero_width(self):
        band = confidence_band([[1.0, 2.0, 3.0]] * 4)
        assert band.mean.tolist() == [1.0, 2.0, 3.0]
        assert np.all(band.half_width == 0.0)

    def test_half_width(self):
        curves = make_rng(11).normal(0, 1, (30, 5))
        band = confidence_band(curves)
        expected = stats.t.ppf(0.975, 29) * curves.std(axis=0, ddof=1) / math.sqrt(30)
        assert band.n == 30
        assert np.allclose(band.half_width, expected)
        assert np.allclose(band.mean, curves.mean(axis=0))

    def test_rejects_bad_input(self):
        with pytest.raises(StatisticsError):
            confidence_band([[1.0, 2.0]])
        with pytest.raises(StatisticsError):
            confidence_band([[1.0, 2.0], [1.0]])
        with pytest.raises(StatisticsError):
            confidence_band([[1.0], [2.0]], level=1.0)
