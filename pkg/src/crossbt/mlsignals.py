"""Walk-forward return prediction with an elastic-net learner.

The protocol is strict about causality: training targets are realised
forward returns whose windows close at or before the prediction date, the
training window ends a full gap before prediction, and prediction features
come from the prior day's close.
"""

from __future__ import annotations

import csv
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .marketdata import PriceMatrix

FEATURE_NAMES = ("r21", "r63", "r126", "vol20", "vol60")

_MIN_HISTORY = 126


class NotEnoughHistory(ValueError):
    """Feature construction needs at least 126 prior days."""


def build_features(pm: PriceMatrix, t: int) -> np.ndarray:
    """Per-asset feature rows at day index ``t``: trailing 21/63/126-day
    simple returns and 20/60-day return volatilities (sample stdev)."""
    if t < _MIN_HISTORY:
        raise NotEnoughHistory(f"day index {t} has under {_MIN_HISTORY} days of history")
    if t >= pm.n_days:
        raise ValueError(f"day index {t} outside panel")
    p = pm.prices

    def ret(k: int) -> np.ndarray:
        return p[t] / p[t - k] - 1.0

    def vol(k: int) -> np.ndarray:
        block = p[t - k : t + 1]
        rets = block[1:] / block[:-1] - 1.0
        return np.std(rets, axis=0, ddof=1)

    return np.column_stack([ret(21), ret(63), ret(126), vol(20), vol(60)])


@dataclass(frozen=True)
class ElasticNetConfig:
    """Penalty weight, L1 mix, and iteration control for the solver."""

    lam: float = 1e-3
    alpha: float = 0.5
    max_iter: int = 1000
    tol: float = 1e-8

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True)
class ElasticNetFit:
    """Coefficients on the original feature scale plus convergence state."""

    coef: np.ndarray
    intercept: float
    converged: bool
    n_iter: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.coef + self.intercept


def _soft_threshold(z: float, gamma: float) -> float:
    if z > gamma:
        return z - gamma
    if z < -gamma:
        return z + gamma
    return 0.0


def fit_elastic_net(X, y, cfg: ElasticNetConfig = ElasticNetConfig()) -> ElasticNetFit:
    """Cyclic coordinate descent on
    (1/2n)||y - b0 - X b||^2 + lam * (alpha ||b||_1 + (1-alpha)/2 ||b||^2).

    Features are standardised internally (population moments) and the
    intercept is unpenalised; coefficients are returned on the original
    scale. Hitting max_iter returns the best iterate with converged=False
    rather than raising.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n, k = X.shape
    if n != len(y) or n < 1:
        raise ValueError("X rows must match y length and be >= 1")

    mu = X.mean(axis=0)
    sigma = X.std(axis=0)
    live = sigma > 0.0
    Xs = np.zeros_like(X)
    Xs[:, live] = (X[:, live] - mu[live]) / sigma[live]
    y_mean = float(y.mean())
    yc = y - y_mean

    l1 = cfg.lam * cfg.alpha
    l2 = cfg.lam * (1.0 - cfg.alpha)
    beta = np.zeros(k)
    resid = yc.copy()
    converged = False
    sweeps = 0
    for sweeps in range(1, cfg.max_iter + 1):
        max_change = 0.0
        for j in range(k):
            if not live[j]:
                continue
            xj = Xs[:, j]
            rho = float(xj @ resid) / n + beta[j]
            new = _soft_threshold(rho, l1) / (1.0 + l2)
            if new != beta[j]:
                resid += xj * (beta[j] - new)
                max_change = max(max_change, abs(new - beta[j]))
                beta[j] = new
        if max_change < cfg.tol:
            converged = True
            break

    coef = np.zeros(k)
    coef[live] = beta[live] / sigma[live]
    intercept = y_mean - float(coef @ mu)
    return ElasticNetFit(coef, intercept, converged, sweeps)


class Learner(Protocol):
    """Pluggable prediction model for the walk-forward loop.

    Alternative model families plug in by implementing this protocol; only
    the elastic net ships here.
    """

    def fit(self, X: np.ndarray, y: np.ndarray) -> "Learner": ...

    def predict(self, X: np.ndarray) -> np.ndarray: ...


class ElasticNetLearner:
    def __init__(self, cfg: ElasticNetConfig = ElasticNetConfig()):
        self.cfg = cfg
        self.fit_: ElasticNetFit | None = None

    def fit(self, X: np.ndarray, y: np.ndarray) -> "ElasticNetLearner":
        self.fit_ = fit_elastic_net(X, y, self.cfg)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        if self.fit_ is None:
            raise RuntimeError("fit before predict")
        return self.fit_.predict(X)


#: Learner registry; other model families register here when implemented.
LEARNERS: dict[str, type] = {"enet": ElasticNetLearner}


@dataclass(frozen=True)
class WalkForwardConfig:
    """Rolling training window, train/predict gap, target horizon, picks."""

    train_window: int = 126
    gap: int = 21
    horizon: int = 21
    top: int = 2

    def __post_init__(self) -> None:
        if min(self.train_window, self.gap, self.horizon, self.top) < 1:
            raise ValueError("all walk-forward parameters must be positive")
        if self.horizon > self.gap:
            raise ValueError("horizon must not exceed the gap (look-ahead)")

    @property
    def min_history(self) -> int:
        """Smallest day index at which a prediction is possible."""
        return _MIN_HISTORY + self.train_window + self.gap - 1


@dataclass(frozen=True)
class SignalRank:
    """Model output at one rebalance: predictions and best-first ordering."""

    date: str
    predicted: np.ndarray
    ranking: tuple[int, ...]
    degenerate: bool = False


def walk_forward_signal(
    pm: PriceMatrix,
    rebalances: Sequence[int],
    wf: WalkForwardConfig = WalkForwardConfig(),
    net: ElasticNetConfig = ElasticNetConfig(),
    learner: Learner | None = None,
) -> list[SignalRank]:
    """Fit-and-predict at each rebalance using only past data.

    Training pairs pool all assets: features at day s, realised return over
    (s, s + horizon], for s across the window ending ``gap`` days before the
    rebalance. Prediction uses features from the day before the rebalance.
    A zero-variance training target yields a uniform (index-ordered) ranking
    flagged degenerate. Ties rank by asset index.
    """
    p = pm.prices
    n = pm.n_assets
    out: list[SignalRank] = []
    for t in rebalances:
        s_hi = t - wf.gap
        s_lo = s_hi - wf.train_window + 1
        if s_lo < _MIN_HISTORY:
            raise NotEnoughHistory(
                f"rebalance at index {t} needs history back to {s_lo}, "
                f"below the {_MIN_HISTORY}-day feature minimum"
            )
        # Causality: every training target's forward window closes by t.
        assert s_hi + wf.horizon <= t
        rows = []
        targets = []
        for s in range(s_lo, s_hi + 1):
            rows.append(build_features(pm, s))
            targets.append(p[s + wf.horizon] / p[s] - 1.0)
        X = np.vstack(rows)
        y = np.concatenate(targets)
        if float(np.std(y)) == 0.0:
            pred = np.zeros(n)
            out.append(SignalRank(pm.dates[t], pred, tuple(range(n)), degenerate=True))
            continue
        model = learner if learner is not None else ElasticNetLearner(net)
        model.fit(X, y)
        pred = np.asarray(model.predict(build_features(pm, t - 1)), dtype=float)
        ranking = tuple(int(i) for i in np.lexsort((np.arange(n), -pred)))
        out.append(SignalRank(pm.dates[t], pred, ranking))
    return out


def signals_to_csv(signals: Sequence[SignalRank], assets: Sequence[str], path: str) -> None:
    """Long-format export: date, asset, predicted return, rank."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["date", "asset", "predicted_return", "rank"])
        for sig in signals:
            rank_of = {a: r for r, a in enumerate(sig.ranking, start=1)}
            for i, asset in enumerate(assets):
                writer.writerow([sig.date, asset, repr(float(sig.predicted[i])), rank_of[i]])
