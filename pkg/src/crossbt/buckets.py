"""Covariate-balanced asset buckets via rerandomisation.

Candidate partitions are sampled uniformly-enough (shuffle + greedy fill
under the sector-distinctness constraint) and the one minimising a
Mahalanobis balance score is retained. Each candidate draws from its own
RNG substream keyed by (seed, candidate index), so parallel and serial
candidate generation agree.
"""

from __future__ import annotations

import json
import math
import warnings
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .marketdata import TRADING_DAYS_PER_YEAR, PriceMatrix, correlation_matrix
from .rng import substream
from .stats import chi2_sf

COVARIATE_NAMES = ("ann_vol", "mean_corr", "log_return")


class InfeasibleConstraint(ValueError):
    """No sector-feasible partition could be constructed."""


@dataclass(frozen=True)
class CovariateTable:
    """Per-asset balance covariates: annualised volatility, mean pairwise
    correlation of daily log returns, and log total return."""

    assets: tuple[str, ...]
    values: np.ndarray  # (n_assets, 3), columns per COVARIATE_NAMES

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=float)
        if vals.shape != (len(self.assets), len(COVARIATE_NAMES)):
            raise ValueError("covariate table must be n_assets x 3")
        if not np.all(np.isfinite(vals)):
            raise ValueError("covariates must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "assets", tuple(self.assets))


def compute_covariates(pm: PriceMatrix) -> CovariateTable:
    """Balance covariates over the full panel.

    Volatility is the sample stdev of daily log returns times sqrt(252);
    correlation is each asset's mean pairwise correlation of log returns
    against all others (zero-variance series correlate 0 by convention);
    log total return is ln(p_T / p_1).
    """
    if pm.n_days < 2:
        raise ValueError("need at least 2 dates")
    logret = np.diff(np.log(pm.prices), axis=0)
    if len(logret) >= 2:
        vol = np.std(logret, axis=0, ddof=1) * math.sqrt(TRADING_DAYS_PER_YEAR)
    else:
        vol = np.zeros(pm.n_assets)
    corr = correlation_matrix(logret)
    n = pm.n_assets
    mean_corr = (corr.sum(axis=1) - 1.0) / (n - 1)
    log_total = np.log(pm.prices[-1] / pm.prices[0])
    return CovariateTable(pm.assets, np.column_stack([vol, mean_corr, log_total]))


@dataclass(frozen=True)
class Partition:
    """Disjoint equal-size buckets plus the balance score they achieved."""

    buckets: tuple[tuple[str, ...], ...]
    score: float
    seed: int
    n_candidates: int
    pinv_fallback: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "buckets", tuple(tuple(b) for b in self.buckets))
        flat = [a for b in self.buckets for a in b]
        if len(flat) != len(set(flat)):
            raise ValueError("buckets overlap")
        sizes = {len(b) for b in self.buckets}
        if len(sizes) > 1:
            raise ValueError("buckets must share one size")

    @property
    def bucket_ids(self) -> tuple[str, ...]:
        return tuple(f"B{i:02d}" for i in range(len(self.buckets)))

    def to_json(self) -> str:
        return json.dumps(
            {
                "seed": self.seed,
                "n_candidates": self.n_candidates,
                "score": self.score,
                "buckets": [list(b) for b in self.buckets],
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "Partition":
        obj = json.loads(text)
        return cls(
            tuple(tuple(b) for b in obj["buckets"]),
            float(obj["score"]),
            int(obj["seed"]),
            int(obj["n_candidates"]),
        )


def bucket_quadratic_forms(
    bucket_means: np.ndarray, universe_mean: np.ndarray, scaled_cov_inv: np.ndarray
) -> np.ndarray:
    """Per-bucket quadratic form (m_b - m)' S^-1 (m_b - m)."""
    d = bucket_means - universe_mean
    return np.einsum("bi,ij,bj->b", d, scaled_cov_inv, d)


def _scoring_matrix(cov: CovariateTable, bucket_size: int) -> tuple[np.ndarray, np.ndarray, bool]:
    """Universe mean and inverse of the covariance scaled by 1/bucket_size."""
    mean = cov.values.mean(axis=0)
    scaled = np.cov(cov.values.T, ddof=1) / bucket_size
    scaled = np.atleast_2d(scaled)
    fallback = False
    try:
        inv = np.linalg.inv(scaled)
    except np.linalg.LinAlgError:
        inv = np.linalg.pinv(scaled)
        fallback = True
    if not np.all(np.isfinite(inv)):
        inv = np.linalg.pinv(scaled)
        fallback = True
    return mean, inv, fallback


def _score_buckets(
    index_buckets: Sequence[Sequence[int]],
    values: np.ndarray,
    universe_mean: np.ndarray,
    scaled_cov_inv: np.ndarray,
) -> float:
    means = np.stack([values[list(b)].mean(axis=0) for b in index_buckets])
    return float(np.sum(bucket_quadratic_forms(means, universe_mean, scaled_cov_inv)))


def mahalanobis_score(partition: Partition, cov: CovariateTable) -> float:
    """Sum over buckets of the Mahalanobis form of the bucket covariate mean
    against the universe mean, with covariance scaled by 1/bucket_size.

    A singular covariance falls back to the pseudo-inverse with a warning.
    """
    pos = {a: i for i, a in enumerate(cov.assets)}
    index_buckets = [[pos[a] for a in b] for b in partition.buckets]
    bucket_size = len(partition.buckets[0])
    mean, inv, fallback = _scoring_matrix(cov, bucket_size)
    if fallback:
        warnings.warn("singular covariate covariance; using pseudo-inverse", RuntimeWarning)
    return _score_buckets(index_buckets, cov.values, mean, inv)


def sample_partition(
    n_assets: int,
    sectors: Sequence[str],
    bucket_size: int,
    n_buckets: int,
    rng: np.random.Generator,
    sector_constraint: bool = True,
    max_restarts: int = 100,
) -> list[list[int]]:
    """One random sector-feasible partition (asset indices), or raise.

    Shuffles assets uniformly and fills buckets greedily, placing each asset
    in the first bucket with room whose sectors it does not collide with;
    dead ends restart with a fresh shuffle, capped at ``max_restarts``.
    """
    for _ in range(max_restarts):
        order = rng.permutation(n_assets)
        buckets: list[list[int]] = [[] for _ in range(n_buckets)]
        bucket_sectors: list[set] = [set() for _ in range(n_buckets)]
        placed = 0
        for idx in order:
            if placed == bucket_size * n_buckets:
                break
            target = None
            for b in range(n_buckets):
                if len(buckets[b]) >= bucket_size:
                    continue
                if sector_constraint and sectors[idx] in bucket_sectors[b]:
                    continue
                target = b
                break
            if target is None:
                # Unplaceable asset is only a dead end if buckets still need fills.
                continue
            buckets[target].append(int(idx))
            bucket_sectors[target].add(sectors[idx])
            placed += 1
        if placed == bucket_size * n_buckets:
            return buckets
    raise InfeasibleConstraint(
        f"no sector-feasible partition after {max_restarts} restarts "
        f"({n_buckets} buckets of {bucket_size})"
    )


def rerandomize(
    cov: CovariateTable,
    sectors: Mapping[str, str],
    bucket_size: int,
    n_buckets: int,
    n_candidates: int,
    seed: int,
    sector_constraint: bool = True,
) -> Partition:
    """Draw candidate partitions and retain the one with the best balance.

    Deterministic for a fixed seed; the returned score is the minimum over
    all sampled candidates (ties keep the earliest candidate).
    """
    n = len(cov.assets)
    if bucket_size * n_buckets > n:
        raise ValueError("bucket_size * n_buckets exceeds universe size")
    if n_candidates < 1:
        raise ValueError("need at least one candidate")
    if sector_constraint:
        sector_list = [sectors[a] for a in cov.assets]
        if bucket_size > len(set(sector_list)):
            raise InfeasibleConstraint(
                f"bucket size {bucket_size} exceeds {len(set(sector_list))} distinct sectors"
            )
    else:
        sector_list = [""] * n
    mean, inv, fallback = _scoring_matrix(cov, bucket_size)
    if fallback:
        warnings.warn("singular covariate covariance; using pseudo-inverse", RuntimeWarning)
    best_score = math.inf
    best_buckets: list[list[int]] | None = None
    for i in range(n_candidates):
        rng = substream(seed, i)
        buckets = sample_partition(
            n, sector_list, bucket_size, n_buckets, rng, sector_constraint
        )
        score = _score_buckets(buckets, cov.values, mean, inv)
        if score < best_score:
            best_score = score
            best_buckets = buckets
    assert best_buckets is not None
    named = tuple(tuple(cov.assets[i] for i in b) for b in best_buckets)
    return Partition(named, best_score, seed, n_candidates, fallback)


@dataclass(frozen=True)
class SectorBalance:
    chi2: float
    p_value: float
    entropy_ratio: float
    df: int


def sector_balance(partition: Partition, sectors: Mapping[str, str]) -> SectorBalance:
    """Sector balance diagnostics for a partition.

    Chi-square compares the pooled sector counts of the partitioned assets
    against a uniform expectation, with (n_buckets - 1) x (n_sectors - 1)
    degrees of freedom for the bucket x sector layout; the entropy ratio is
    the Shannon entropy of the pooled sector distribution over ln(n_sectors).
    Sector labels come from the full universe map, so a sector the partition
    missed entirely shows up as a zero count.
    """
    assets = [a for b in partition.buckets for a in b]
    labels = sorted(set(sectors.values()))
    counts = np.array([sum(1 for a in assets if sectors[a] == s) for s in labels], float)
    expected = len(assets) / len(labels)
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    df = max((len(partition.buckets) - 1) * (len(labels) - 1), 1)
    p = chi2_sf(chi2, df)
    probs = counts / counts.sum()
    live = probs > 0
    entropy = float(-np.sum(probs[live] * np.log(probs[live])))
    ratio = entropy / math.log(len(labels)) if len(labels) > 1 else 0.0
    return SectorBalance(chi2, p, ratio, df)
