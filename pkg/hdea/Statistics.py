import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from hdea.errors import StatisticsError

ALTERNATIVES = ("two-sided", "greater", "less")
EXACT_WILCOXON_MAX_N = 25

WELCH = "welch-t"
WILCOXON_EXACT = "wilcoxon-signed-rank-exact"
WILCOXON_NORMAL = "wilcoxon-signed-rank-normal"


@dataclass(frozen=True)
class SampleSummary:
    n: int
    mean: float
    sd: float
    median: float
    kurtosis: float
    min: float
    max: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TestResult:
    """
    Outcome of a two-sample test.

    effect is the mean difference xs - ys for Welch and W+ - W- for Wilcoxon,
    so swapping the samples negates it. df is set for Welch, n (pairs left
    after dropping zero differences) for Wilcoxon.
    """

    __test__ = False

    statistic: float
    p_value: float
    method: str
    effect: float = math.nan
    df: Optional[float] = None
    n: Optional[int] = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CurveBand:
    """Pointwise mean of several curves with a two-sided t-interval."""

    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    n: int
    level: float

    @property
    def half_width(self) -> np.ndarray:
        return self.upper - self.mean


def _sample(values: Sequence[float], name: str = "sample") -> np.ndarray:
    array = np.asarray(values, dtype=np.float64)
    if array.ndim != 1:
        raise StatisticsError(f"The {name} must be one-dimensional")
    if array.size == 0:
        raise StatisticsError(f"The {name} is empty")
    if not np.all(np.isfinite(array)):
        raise StatisticsError(f"The {name} holds non-finite values")
    return array


def _check_alternative(alternative: str):
    if alternative not in ALTERNATIVES:
        raise StatisticsError(f"alternative must be one of {ALTERNATIVES}: {alternative!r}")


def summarize(xs: Sequence[float]) -> SampleSummary:
    """
    Describe a sample.

    sd uses the n-1 denominator. kurtosis is the non-excess fourth
    standardized moment with population moments (about 3 for normal data);
    it is NaN when the sample has fewer than two values or no spread, as is
    sd for a single value.
    """
    x = _sample(xs)
    spread = x.size >= 2 and np.ptp(x) > 0
    return SampleSummary(
        n=int(x.size),
        mean=float(np.mean(x)),
        sd=float(np.std(x, ddof=1)) if x.size >= 2 else math.nan,
        median=float(np.median(x)),
        kurtosis=float(stats.kurtosis(x, fisher=False, bias=True)) if spread else math.nan,
        min=float(np.min(x)),
        max=float(np.max(x)),
    )


def _directional_p(alternative: str, upper_tail: float, lower_tail: float) -> float:
    if alternative == "greater":
        p = upper_tail
    elif alternative == "less":
        p = lower_tail
    else:
        p = 2.0 * min(upper_tail, lower_tail)
    return float(min(1.0, max(0.0, p)))


def welch_t_test(
    xs: Sequence[float], ys: Sequence[float], alternative: str = "two-sided"
) -> TestResult:
    """
    Welch's unequal-variance t-test of mean(xs) against mean(ys).

    t = (mean_x - mean_y) / sqrt(s_x^2/n_x + s_y^2/n_y), with Welch-Satterthwaite
    degrees of freedom; p comes from the Student-t survival function.

    When both variances are zero the test degenerates: equal means give t=0 and
    p=1, different means give t=+-inf and p=0 in the direction of the shift.
    """
    _check_alternative(alternative)
    x, y = _sample(xs, "first sample"), _sample(ys, "second sample")
    if x.size < 2 or y.size < 2:
        raise StatisticsError("Welch's test needs at least two values per sample")
    vx = np.var(x, ddof=1) / x.size
    vy = np.var(y, ddof=1) / y.size
    difference = float(np.mean(x) - np.mean(y))
    se2 = vx + vy

    if se2 == 0:
        if difference == 0:
            return TestResult(0.0, 1.0, WELCH, effect=0.0, df=math.nan)
        upper = 0.0 if difference > 0 else 1.0
        statistic = math.copysign(math.inf, difference)
        return TestResult(
            statistic, _directional_p(alternative, upper, 1.0 - upper), WELCH,
            effect=difference, df=math.nan,
        )

    statistic = difference / math.sqrt(se2)
    df = se2**2 / (vx**2 / (x.size - 1) + vy**2 / (y.size - 1))
    p = _directional_p(
        alternative, stats.t.sf(statistic, df), stats.t.sf(-statistic, df)
    )
    return TestResult(float(statistic), p, WELCH, effect=difference, df=float(df))


def signed_rank_distribution(doubled_ranks: Sequence[int]) -> np.ndarray:
    """
    Null counts of 2*W+ over all 2^n sign assignments.

    Ranks are passed doubled so averaged (half-integer) tie ranks stay
    integral. Entry s of the result counts the assignments whose doubled
    positive rank sum equals s.
    """
    doubled = [int(r) for r in doubled_ranks]
    counts = np.zeros(sum(doubled) + 1, dtype=np.int64)
    counts[0] = 1
    for rank in doubled:
        shifted = np.zeros_like(counts)
        shifted[rank:] = counts[: counts.size - rank]
        counts = counts + shifted
    return counts


def wilcoxon_signed_rank(
    xs: Sequence[float],
    ys: Sequence[float],
    alternative: str = "two-sided",
) -> TestResult:
    """
    Wilcoxon signed-rank test on the paired differences xs - ys.

    Zero differences are dropped; if none remain the result is W+=0, p=1.
    Tied |differences| share their average rank. For up to 25 remaining pairs
    p is exact, from the full null distribution of W+; above that a normal
    approximation with tie and continuity corrections is used. The two-sided
    p is twice the smaller tail, capped at 1. The statistic reported is W+.
    """
    _check_alternative(alternative)
    x, y = _sample(xs, "first sample"), _sample(ys, "second sample")
    if x.size != y.size:
        raise StatisticsError(f"Paired samples differ in length: {x.size} vs {y.size}")
    differences = x - y
    differences = differences[differences != 0]
    n = int(differences.size)
    if n == 0:
        return TestResult(0.0, 1.0, WILCOXON_EXACT, effect=0.0, n=0)

    ranks = stats.rankdata(np.abs(differences))
    w_plus = float(ranks[differences > 0].sum())
    w_minus = float(ranks[differences < 0].sum())
    effect = w_plus - w_minus

    if n <= EXACT_WILCOXON_MAX_N:
        counts = signed_rank_distribution(np.rint(2 * ranks).astype(np.int64))
        observed = int(round(2 * w_plus))
        total = float(2**n)
        upper = counts[observed:].sum() / total
        lower = counts[: observed + 1].sum() / total
        p = _directional_p(alternative, upper, lower)
        return TestResult(w_plus, p, WILCOXON_EXACT, effect=effect, n=n)

    mean = n * (n + 1) / 4.0
    _, ties = np.unique(np.abs(differences), return_counts=True)
    variance = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(ties**3 - ties)) / 48.0
    sd = math.sqrt(variance)
    upper = stats.norm.sf((w_plus - mean - 0.5) / sd)
    lower = stats.norm.cdf((w_plus - mean + 0.5) / sd)
    if alternative == "two-sided":
        z = max(abs(w_plus - mean) - 0.5, 0.0) / sd
        p = float(min(1.0, 2.0 * stats.norm.sf(z)))
    else:
        p = _directional_p(alternative, upper, lower)
    return TestResult(w_plus, p, WILCOXON_NORMAL, effect=effect, n=n)


def confidence_band(curves: Sequence[Sequence[float]], level: float = 0.95) -> CurveBand:
    """
    Pointwise mean +- t_{(1+level)/2, n-1} * standard error over n curves.

    Parameters:
        curves: At least two sequences of equal length (e.g. best fitness per
            generation of each run).
        level (float): Two-sided confidence level in (0, 1).
    """
    if not 0.0 < level < 1.0:
        raise StatisticsError(f"level must lie in (0, 1): {level}")
    if len(curves) < 2:
        raise StatisticsError("A confidence band needs at least two curves")
    lengths = {len(curve) for curve in curves}
    if len(lengths) != 1:
        raise StatisticsError(f"Curves differ in length: {sorted(lengths)}")
    data = np.asarray(curves, dtype=np.float64)
    n = data.shape[0]
    mean = data.mean(axis=0)
    sem = data.std(axis=0, ddof=1) / math.sqrt(n)
    half = stats.t.ppf((1.0 + level) / 2.0, n - 1) * sem
    return CurveBand(mean=mean, lower=mean - half, upper=mean + half, n=n, level=level)
