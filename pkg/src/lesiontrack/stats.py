"""Nonparametric tests, regression and agreement summaries.

Conventions match the classic R defaults: Wilcoxon signed-rank discards
zero differences, uses average ranks for ties, switches from an exact
sign-enumeration p-value (n <= 12, no ties) to a normal approximation
with tie and continuity corrections; the Friedman statistic is the
tie-corrected chi-squared form. Tail probabilities come from regularized
incomplete gamma/beta functions (scipy.special), accurate beyond 1e-10.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

TWO_SIDED = "two-sided"
GREATER = "greater"
LESS = "less"
_ALTERNATIVES = (TWO_SIDED, GREATER, LESS)

ALPHA = 0.05


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    n_effective: int
    method: str  # "exact" | "normal-approximation" | "chi-squared-approximation"
    effect_size_r: float | None = None

    @property
    def significant(self) -> bool:
        return self.p_value < ALPHA


@dataclass(frozen=True)
class RegressionFit:
    """Ordinary least squares fit with the pieces needed for a 95% CI band."""

    slope: float
    intercept: float
    r_squared: float
    n: int
    x_mean: float
    sxx: float
    residual_se: float
    t_crit_95: float

    def predict(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.intercept

    def ci95_halfwidth(self, x):
        """Half-width of the 95% CI for the mean prediction at x."""
        x = np.asarray(x, dtype=float)
        if self.n <= 2:
            return np.zeros_like(x)
        se = self.residual_se * np.sqrt(1.0 / self.n + (x - self.x_mean) ** 2 / self.sxx)
        return self.t_crit_95 * se


@dataclass(frozen=True)
class AgreementSummary:
    """Bland-Altman bias and 95% limits of agreement."""

    bias: float
    sd_diff: float
    loa_lower: float
    loa_upper: float
    pairs: tuple[tuple[float, float], ...]  # (mean, diff = automated - manual)


@dataclass(frozen=True)
class QuantileSummary:
    median: float
    q1: float
    q3: float


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank
# ---------------------------------------------------------------------------


def _signrank_counts(n: int) -> np.ndarray:
    """counts[w] = number of subsets of ranks {1..n} summing to w."""
    counts = np.zeros(n * (n + 1) // 2 + 1, dtype=np.int64)
    counts[0] = 1
    for r in range(1, n + 1):
        counts[r:] = counts[r:] + counts[:-r]
    return counts


def _rankdata(values: np.ndarray) -> np.ndarray:
    """Average ranks (midranks for ties), 1-based."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    sv = values[order]
    i = 0
    while i < sv.size:
        j = i
        while j + 1 < sv.size and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def wilcoxon_signed_rank(
    paired_a, paired_b, alternative: str = TWO_SIDED
) -> TestResult:
    """Wilcoxon signed-rank test on paired samples.

    The statistic is the sum of ranks of positive differences a - b.
    When every difference is zero the result degenerates to p = 1.
    """
    if alternative not in _ALTERNATIVES:
        raise ValueError(f"alternative must be one of {_ALTERNATIVES}, got {alternative!r}")
    a = np.asarray(paired_a, dtype=np.float64)
    b = np.asarray(paired_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"paired samples must be equal-length 1-D, got {a.shape} vs {b.shape}")
    if a.size < 1:
        raise ValueError("need at least one pair")

    d = a - b
    d = d[d != 0]
    n = int(d.size)
    if n == 0:
        return TestResult(statistic=0.0, p_value=1.0, n_effective=0, method="exact", effect_size_r=0.0)

    absd = np.abs(d)
    ranks = _rankdata(absd)
    w = float(ranks[d > 0].sum())
    has_ties = np.unique(absd).size < n

    if n <= 12 and not has_ties:
        counts = _signrank_counts(n)
        total = float(2**n)
        wi = int(round(w))
        p_greater = float(counts[wi:].sum()) / total
        p_less = float(counts[: wi + 1].sum()) / total
        p_two = min(1.0, 2.0 * min(p_greater, p_less))
        if alternative == GREATER:
            p = p_greater
        elif alternative == LESS:
            p = p_less
        else:
            p = p_two
        # Effect size via the z equivalent to the two-sided exact p.
        z = special.ndtri(1.0 - p_two / 2.0)
        return TestResult(
            statistic=w,
            p_value=p,
            n_effective=n,
            method="exact",
            effect_size_r=float(abs(z)) / math.sqrt(n),
        )

    mu = n * (n + 1) / 4.0
    _, tie_counts = np.unique(absd, return_counts=True)
    tie_term = float((tie_counts.astype(np.float64) ** 3 - tie_counts).sum())
    sigma = math.sqrt(n * (n + 1) * (2 * n + 1) / 24.0 - tie_term / 48.0)
    if alternative == GREATER:
        correction = 0.5
    elif alternative == LESS:
        correction = -0.5
    else:
        correction = 0.5 * np.sign(w - mu)
    z = (w - mu - correction) / sigma
    if alternative == GREATER:
        p = float(special.ndtr(-z))
    elif alternative == LESS:
        p = float(special.ndtr(z))
    else:
        p = min(1.0, 2.0 * float(min(special.ndtr(z), special.ndtr(-z))))
    return TestResult(
        statistic=w,
        p_value=p,
        n_effective=n,
        method="normal-approximation",
        effect_size_r=float(abs(z)) / math.sqrt(n),
    )


# ---------------------------------------------------------------------------
# Friedman
# ---------------------------------------------------------------------------


def friedman(block_matrix) -> TestResult:
    """Friedman rank test over an (n blocks x k treatments) matrix."""
    m = np.asarray(block_matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("block matrix must be 2-D (ragged input?)")
    n, k = m.shape
    if k < 2:
        raise ValueError(f"need at least 2 treatments, got {k}")
    if n < 2:
        raise ValueError(f"need at least 2 blocks, got {n}")
    if not np.isfinite(m).all():
        raise ValueError("block matrix must be complete (finite values)")

    ranks = np.vstack([_rankdata(row) for row in m])
    col_sums = ranks.sum(axis=0)
    a = 12.0 * float(((col_sums - n * (k + 1) / 2.0) ** 2).sum())
    tie_term = 0.0
    for row in m:
        _, counts = np.unique(row, return_counts=True)
        tie_term += float((counts.astype(np.float64) ** 3 - counts).sum())
    denom = n * k * (k + 1) - tie_term / (k - 1)
    if a == 0.0 or denom <= 0.0:
        return TestResult(statistic=0.0, p_value=1.0, n_effective=n, method="chi-squared-approximation")
    q = a / denom
    p = float(special.gammaincc((k - 1) / 2.0, q / 2.0))
    return TestResult(statistic=float(q), p_value=p, n_effective=n, method="chi-squared-approximation")


# ---------------------------------------------------------------------------
# Regression, agreement, quantiles
# ---------------------------------------------------------------------------


def linear_regression(x, y) -> RegressionFit:
    """OLS fit of y on x with R^2 and 95% CI band parameters."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"x and y must be equal-length 1-D, got {x.shape} vs {y.shape}")
    n = int(x.size)
    if n < 2:
        raise ValueError("need at least 2 points")
    x_mean = float(x.mean())
    y_mean = float(y.mean())
    sxx = float(((x - x_mean) ** 2).sum())
    if sxx == 0.0:
        raise ValueError("degenerate x: all values identical")
    sxy = float(((x - x_mean) * (y - y_mean)).sum())
    slope = sxy / sxx
    intercept = y_mean - slope * x_mean
    resid = y - (slope * x + intercept)
    ss_res = float((resid**2).sum())
    ss_tot = float(((y - y_mean) ** 2).sum())
    # Constant y gives ss_tot 0; R^2 is pinned to 0 to avoid 0/0.
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 0.0
    if n > 2:
        residual_se = math.sqrt(ss_res / (n - 2))
        t_crit = float(special.stdtrit(n - 2, 0.975))
    else:
        residual_se = 0.0
        t_crit = 0.0
    return RegressionFit(
        slope=slope,
        intercept=intercept,
        r_squared=r_squared,
        n=n,
        x_mean=x_mean,
        sxx=sxx,
        residual_se=residual_se,
        t_crit_95=t_crit,
    )


def bland_altman(manual, automated) -> AgreementSummary:
    """Agreement between manual and automated measurements.

    diff = automated - manual; limits of agreement are bias +/- 1.96 sd
    with the sample (n-1) standard deviation.
    """
    m = np.asarray(manual, dtype=np.float64)
    auto = np.asarray(automated, dtype=np.float64)
    if m.shape != auto.shape or m.ndim != 1:
        raise ValueError(f"inputs must be equal-length 1-D, got {m.shape} vs {auto.shape}")
    if m.size < 2:
        raise ValueError("need at least 2 pairs")
    diff = auto - m
    mean = (m + auto) / 2.0
    bias = float(diff.mean())
    sd = float(diff.std(ddof=1))
    hw = 1.96 * sd
    return AgreementSummary(
        bias=bias,
        sd_diff=sd,
        loa_lower=bias - hw,
        loa_upper=bias + hw,
        pairs=tuple((float(a), float(b)) for a, b in zip(mean, diff)),
    )


def median_iqr(values) -> QuantileSummary:
    """Median and quartiles via linear interpolation between order statistics."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 1:
        raise ValueError("need at least one value")
    q1, med, q3 = np.percentile(v, [25.0, 50.0, 75.0], method="linear")
    return QuantileSummary(median=float(med), q1=float(q1), q3=float(q3))
