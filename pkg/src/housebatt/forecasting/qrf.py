"""Quantile regression forest.

Trees are grown by scikit-learn; the quantile step is ours. Every training
row is dropped down every tree, and a prediction pools the training targets
that share a leaf with the query point in each tree. Quantiles of that pool
use linear interpolation between order statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.ensemble import RandomForestRegressor

from housebatt.forecasting.base import QUANTILES, ForecastError

WINDOW_DAYS = 30
MIN_TRAIN_ROWS = 24


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    min_leaf: int = 5
    seed: int = 0
    window_days: int = WINDOW_DAYS


@dataclass
class QuantileModel:
    target: str
    n_features: int
    params: ForestParams
    forest: RandomForestRegressor = field(repr=False)
    # per tree: leaf id -> training targets that land in it
    leaves: list[dict[int, np.ndarray]] = field(repr=False)

    def leaf_pool(self, x: np.ndarray) -> np.ndarray:
        ids = self.forest.apply(x.reshape(1, -1))[0]
        return np.concatenate([tree[int(leaf)] for tree, leaf in zip(self.leaves, ids)])


def train_quantile_model(
    features: np.ndarray,
    targets: np.ndarray,
    target: str = "load",
    params: ForestParams | None = None,
) -> QuantileModel:
    """Fit on the last ``params.window_days`` days of hourly rows."""
    params = params or ForestParams()
    X = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ForecastError(f"features {X.shape} and targets {y.shape} do not line up")
    keep = params.window_days * 24
    X, y = X[-keep:], y[-keep:]
    if X.shape[0] == 0:
        raise ForecastError("empty training window")
    if X.shape[0] < MIN_TRAIN_ROWS:
        raise ForecastError(f"need at least {MIN_TRAIN_ROWS} training rows, got {X.shape[0]}")
    p = X.shape[1]
    forest = RandomForestRegressor(
        n_estimators=params.n_trees,
        min_samples_leaf=params.min_leaf,
        max_features=min(p, math.ceil(math.sqrt(p))),
        bootstrap=True,
        random_state=params.seed,
        n_jobs=1,
    )
    forest.fit(X, y)
    leaf_ids = forest.apply(X)
    leaves = []
    for k in range(leaf_ids.shape[1]):
        col = leaf_ids[:, k]
        order = np.argsort(col, kind="stable")
        uniq, starts = np.unique(col[order], return_index=True)
        groups = np.split(y[order], starts[1:])
        leaves.append({int(u): g for u, g in zip(uniq, groups)})
    return QuantileModel(target, p, params, forest, leaves)


def predict_quantiles(
    m: QuantileModel, features: np.ndarray, quantiles: Sequence[float] = QUANTILES
) -> dict[float, np.ndarray]:
    """Quantiles for one feature row (1-D) or many (2-D); clipped at zero."""
    X = np.asarray(features, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != m.n_features:
        raise ForecastError(f"model expects {m.n_features} features, got {X.shape[1]}")
    ids = m.forest.apply(X)
    out = np.empty((X.shape[0], len(quantiles)))
    for i, row in enumerate(ids):
        pool = np.concatenate([tree[int(leaf)] for tree, leaf in zip(m.leaves, row)])
        out[i] = np.quantile(pool, quantiles, method="linear")
    out = np.maximum(out, 0.0)
    # pooled order statistics are already monotone; guard against fp ties
    out = np.maximum.accumulate(out, axis=1)
    result = {q: out[:, j] for j, q in enumerate(quantiles)}
    if single:
        return {q: float(v[0]) for q, v in result.items()}  # type: ignore[misc]
    return result
