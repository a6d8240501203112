"""Hypothesis tests, equivalence tests, concordance, and resampling.

Every routine returns a structured result rather than printing; degenerate
inputs (zero variance, all-zero differences) are flagged rather than raised
so the analysis battery can run to completion over an arbitrary grid.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
from scipy import special

from .rng import substream

_TINY_P = float(np.finfo(float).tiny)

_EXHAUSTIVE_CAP = 16


class NotEnoughClusters(ValueError):
    """Cluster bootstrap needs at least two clusters."""


# ---------------------------------------------------------------------------
# Distribution kernel
# ---------------------------------------------------------------------------

def t_cdf(x: float, df: float) -> float:
    """Student-t CDF."""
    return float(special.stdtr(df, x))


def t_quantile(p: float, df: float) -> float:
    """Student-t quantile (inverse CDF)."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    return float(special.stdtrit(df, p))


def normal_cdf(x: float) -> float:
    """Standard normal CDF."""
    return float(special.ndtr(x))


def chi2_sf(x: float, df: float) -> float:
    """Chi-square survival function (upper tail)."""
    return float(special.chdtrc(df, x))


def _clamp_p(p: float) -> float:
    """Keep p-values in (0, 1]."""
    return float(min(max(p, _TINY_P), 1.0))


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float | None
    method: str
    n: int
    ci: tuple[float, float] | None = None
    degenerate: bool = False


@dataclass(frozen=True)
class TostResult:
    equivalent: bool
    p_value: float | None
    p_lower: float | None
    p_upper: float | None
    margin: float
    n: int
    degenerate: bool = False


@dataclass(frozen=True)
class BootstrapResult:
    point: float
    ci95: tuple[float, float]
    draws: int
    n_clusters: int


# ---------------------------------------------------------------------------
# Rank helpers
# ---------------------------------------------------------------------------

def average_ranks(values: Sequence[float]) -> np.ndarray:
    """Ranks starting at 1, ties receiving their average rank."""
    a = np.asarray(values, dtype=float)
    order = np.argsort(a, kind="stable")
    ranks = np.empty(len(a))
    base = np.arange(1, len(a) + 1, dtype=float)
    i = 0
    while i < len(a):
        j = i
        while j + 1 < len(a) and a[order[j + 1]] == a[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = base[i : j + 1].mean()
        i = j + 1
    return ranks


# ---------------------------------------------------------------------------
# Location tests
# ---------------------------------------------------------------------------

def one_sample_t(diffs: Sequence[float]) -> TestResult:
    """Two-sided one-sample t-test of mean zero."""
    d = np.asarray(diffs, dtype=float)
    n = len(d)
    if n < 2:
        raise ValueError("need at least 2 observations")
    sd = float(np.std(d, ddof=1))
    if sd == 0.0:
        return TestResult(math.nan, None, "t", n, degenerate=True)
    t = float(np.mean(d)) / (sd / math.sqrt(n))
    p = _clamp_p(2.0 * (1.0 - t_cdf(abs(t), n - 1)))
    return TestResult(t, p, "t", n)


def bh_fdr(p_values: Sequence[float], q: float) -> np.ndarray:
    """Benjamini-Hochberg step-up rejections at FDR level q.

    Returns a boolean mask aligned with the input: True where the hypothesis
    is rejected.
    """
    p = np.asarray(p_values, dtype=float)
    m = len(p)
    reject = np.zeros(m, dtype=bool)
    if m == 0:
        return reject
    order = np.argsort(p, kind="stable")
    thresholds = np.arange(1, m + 1) * q / m
    passing = np.nonzero(p[order] <= thresholds)[0]
    if len(passing):
        k = passing[-1]
        reject[order[: k + 1]] = True
    return reject


def _wilcoxon_exact_p(doubled_ranks: np.ndarray, doubled_w: int, n: int) -> float:
    """Exact two-sided p for W+ by enumerating the sign-flip distribution.

    Uses the subset-sum polynomial over doubled ranks (average ranks are
    half-integers) - equivalent to full enumeration of all 2^n assignments.
    """
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    center = total / 2.0
    dev = abs(doubled_w - center)
    support = np.arange(total + 1, dtype=float)
    mask = np.abs(support - center) >= dev - 1e-9
    return float(counts[mask].sum() / 2.0**n)


def wilcoxon_signed_rank(diffs: Sequence[float]) -> TestResult:
    """Wilcoxon signed-rank test, two-sided.

    Zeros are dropped; ties get average ranks. Exact p by full sign
    enumeration for n <= 20, else a normal approximation with tie and
    continuity corrections.
    """
    d = np.asarray(diffs, dtype=float)
    d = d[d != 0.0]
    n = len(d)
    if n == 0:
        return TestResult(math.nan, None, "wilcoxon", 0, degenerate=True)
    ranks = average_ranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if n <= 20:
        doubled = np.rint(2.0 * ranks).astype(int)
        p = _wilcoxon_exact_p(doubled, int(round(2.0 * w_plus)), n)
        return TestResult(w_plus, _clamp_p(p), "wilcoxon-exact", n)
    mu = n * (n + 1) / 4.0
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    tie_term = float(np.sum(tie_counts.astype(float) ** 3 - tie_counts))
    var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term / 48.0
    sd = math.sqrt(var)
    dev = abs(w_plus - mu)
    if dev <= 0.5:
        p = 1.0
    else:
        p = 2.0 * (1.0 - normal_cdf((dev - 0.5) / sd))
    return TestResult(w_plus, _clamp_p(min(p, 1.0)), "wilcoxon-normal", n)


def sign_flip_permutation(
    diffs: Sequence[float],
    draws: int = 10000,
    seed: int = 0,
    exhaustive: bool = False,
) -> TestResult:
    """Sign-flip permutation test of mean zero, statistic |mean|.

    Monte Carlo sign vectors come from a counter-based stream keyed by the
    seed, with draw i reading a fixed slice, so the result is a pure
    function of (seed, draws) at any evaluation order or thread count. The
    add-one estimator keeps p strictly positive. ``exhaustive=True``
    enumerates all 2^n sign vectors instead (n capped at 16) and reports
    the exact count.
    """
    d = np.asarray(diffs, dtype=float)
    n = len(d)
    if n == 0:
        raise ValueError("empty sample")
    obs = abs(float(np.ones(n) @ d) / n)
    if exhaustive:
        if n > _EXHAUSTIVE_CAP:
            raise ValueError(f"exhaustive enumeration capped at n={_EXHAUSTIVE_CAP}")
        patterns = ((np.arange(2**n)[:, None] >> np.arange(n)) & 1) * 2.0 - 1.0
        means = np.abs(patterns @ d) / n
        # The all-plus pattern is the last row; using it as the observed value
        # keeps the comparison on one summation path, so the identity always
        # counts itself.
        p = float(np.count_nonzero(means >= means[-1])) / 2.0**n
        return TestResult(float(means[-1]), _clamp_p(p), "perm-exhaustive", n)
    signs = substream(seed, 0).integers(0, 2, size=(draws, n)) * 2.0 - 1.0
    means = np.abs(signs @ d) / n
    hits = int(np.count_nonzero(means >= obs))
    p = (hits + 1) / (draws + 1)
    return TestResult(obs, _clamp_p(p), "perm-mc", n)


def tost(diffs: Sequence[float], margin: float, alpha: float = 0.05) -> TostResult:
    """Schuirmann two one-sided tests of practical equivalence within ±margin.

    Equivalent iff both one-sided p-values fall below alpha. A zero-variance
    sample is declared equivalent iff |mean| < margin, with the degenerate
    flag set.
    """
    if margin <= 0:
        raise ValueError("margin must be positive")
    d = np.asarray(diffs, dtype=float)
    n = len(d)
    if n == 0:
        raise ValueError("empty sample")
    mean = float(np.mean(d))
    sd = float(np.std(d, ddof=1)) if n >= 2 else 0.0
    if n < 2 or sd == 0.0:
        return TostResult(abs(mean) < margin, None, None, None, margin, n, degenerate=True)
    se = sd / math.sqrt(n)
    df = n - 1
    p_lower = _clamp_p(1.0 - t_cdf((mean + margin) / se, df))
    p_upper = _clamp_p(t_cdf((mean - margin) / se, df))
    p = max(p_lower, p_upper)
    return TostResult(p < alpha, p, p_lower, p_upper, margin, n)


# ---------------------------------------------------------------------------
# Agreement measures
# ---------------------------------------------------------------------------

def lin_ccc(x: Sequence[float], y: Sequence[float]) -> float:
    """Lin's concordance correlation coefficient (population moments).

    rho_c = 2 s_xy / (s_x^2 + s_y^2 + (mean_x - mean_y)^2). Two identical
    constant vectors are in perfect agreement and return 1.0.
    """
    a = np.asarray(x, dtype=float)
    b = np.asarray(y, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise ValueError("need two equal-length vectors of >= 2 points")
    ma, mb = float(np.mean(a)), float(np.mean(b))
    sxy = float(np.mean((a - ma) * (b - mb)))
    sx2 = float(np.mean((a - ma) ** 2))
    sy2 = float(np.mean((b - mb) ** 2))
    denom = sx2 + sy2 + (ma - mb) ** 2
    if denom == 0.0:
        return 1.0
    return 2.0 * sxy / denom


def pearson(x: Sequence[float], y: Sequence[float]) -> TestResult:
    """Pearson correlation with a two-sided t-approximation p-value."""
    a = np.asarray(x, dtype=float)
    b = np.asarray(y, dtype=float)
    n = len(a)
    if n < 3:
        raise ValueError("need at least 3 points")
    sa = a - a.mean()
    sb = b - b.mean()
    na = float(np.sqrt((sa**2).sum()))
    nb = float(np.sqrt((sb**2).sum()))
    if na == 0.0 or nb == 0.0:
        return TestResult(math.nan, None, "pearson", n, degenerate=True)
    r = float(sa @ sb) / (na * nb)
    r = min(max(r, -1.0), 1.0)
    if 1.0 - r * r <= 0.0:
        return TestResult(r, _TINY_P, "pearson", n)
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    p = _clamp_p(2.0 * (1.0 - t_cdf(abs(t), n - 2)))
    return TestResult(r, p, "pearson", n)


def spearman(x: Sequence[float], y: Sequence[float]) -> TestResult:
    """Spearman rank correlation: Pearson on average-ranked data."""
    rx = average_ranks(x)
    ry = average_ranks(y)
    res = pearson(rx, ry)
    return TestResult(res.statistic, res.p_value, "spearman", res.n, degenerate=res.degenerate)


# ---------------------------------------------------------------------------
# Resampling and dependence diagnostics
# ---------------------------------------------------------------------------

def cluster_bootstrap(
    groups: Sequence,
    statistic: Callable[[list], float],
    draws: int = 5000,
    seed: int = 0,
) -> BootstrapResult:
    """Percentile bootstrap resampling whole clusters with replacement.

    ``statistic`` receives the resampled list of groups (duplicates included)
    and returns a scalar. Resampling indices come from a counter-based
    stream keyed by the seed with draw i reading a fixed slice, so the
    interval is bit-reproducible for a fixed seed at any thread count.
    """
    pool = list(groups)
    m = len(pool)
    if m < 2:
        raise NotEnoughClusters(f"need >= 2 clusters, got {m}")
    point = float(statistic(pool))
    indices = substream(seed, 0).integers(0, m, size=(draws, m))
    vals = np.empty(draws)
    for i in range(draws):
        vals[i] = statistic([pool[j] for j in indices[i]])
    lo, hi = np.percentile(vals, [2.5, 97.5])
    return BootstrapResult(point, (float(lo), float(hi)), draws, m)


def lag1_autocorr(series: Sequence[float]) -> TestResult:
    """Lag-1 autocorrelation: Pearson correlation of the series with itself
    shifted by one position."""
    x = np.asarray(series, dtype=float)
    if len(x) < 3:
        raise ValueError("need at least 3 points")
    a, b = x[:-1], x[1:]
    sa = a - a.mean()
    sb = b - b.mean()
    na = float(np.sqrt((sa**2).sum()))
    nb = float(np.sqrt((sb**2).sum()))
    if na == 0.0 or nb == 0.0:
        return TestResult(math.nan, None, "lag1", len(x), degenerate=True)
    r = float(sa @ sb) / (na * nb)
    return TestResult(min(max(r, -1.0), 1.0), None, "lag1", len(x))
