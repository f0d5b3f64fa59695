"""Quantile forecasts for a simulation, retrained on a fixed cadence."""

from __future__ import annotations

from datetime import datetime

import numpy as np

from housebatt.forecasting.base import QUANTILES, ForecastError, ForecastSet
from housebatt.forecasting.features import NwpTable
from housebatt.forecasting.qrf import MIN_TRAIN_ROWS, ForestParams, QuantileModel, predict_quantiles, train_quantile_model
from housebatt.forecasting.persistence import perfect
from housebatt.timeseries import HOUR, InverterDataset


class QuantileForecaster:
    """Load and PV quantile forests over a dataset and its NWP table.

    Models are refit every ``retrain_every_h`` hours (aligned to local
    midnight) on the trailing ``params.window_days`` days of present rows. Until
    ``MIN_TRAIN_ROWS`` rows of history exist, actuals are returned, as with the
    persistence baselines' first day.
    """

    def __init__(
        self,
        ds: InverterDataset,
        nwp: NwpTable,
        params: ForestParams | None = None,
        retrain_every_h: int = 24,
    ):
        if retrain_every_h <= 0 or 24 % retrain_every_h:
            raise ForecastError("retrain_every_h must divide 24")
        self.ds = ds
        self.nwp = nwp
        self.params = params or ForestParams()
        self.retrain_every_h = retrain_every_h
        times = [ds.timestamp_at(i) for i in range(len(ds))]
        self._X = {
            "load": nwp.matrix(times, "load"),
            "pv": nwp.matrix(times, "pv"),
        }
        self._models: dict[int, dict[str, QuantileModel] | None] = {}
        self._pred: dict[tuple[int, int], tuple[dict[float, float], dict[float, float]]] = {}
        self._epoch0 = ds.start.replace(hour=0)

    def _epoch_index(self, i: int) -> int:
        """Dataset index at which the model serving hour ``i`` was trained."""
        t = self.ds.timestamp_at(i)
        hours = (t - self._epoch0) // HOUR
        e = hours - hours % self.retrain_every_h
        return self.ds.index_of(self._epoch0 + e * HOUR)

    def _models_at(self, e: int) -> dict[str, QuantileModel] | None:
        if e in self._models:
            return self._models[e]
        lo = max(0, e - self.params.window_days * 24)
        hi = max(0, e)
        mask = self.ds.present[lo:hi]
        if mask.sum() < MIN_TRAIN_ROWS:
            self._models[e] = None
            return None
        models = {}
        for target, y in (("load", self.ds.load), ("pv", self.ds.pv)):
            X = self._X[target][lo:hi][mask]
            models[target] = train_quantile_model(X, y[lo:hi][mask], target, self.params)
        self._models[e] = models
        return models

    def _predict(self, e: int, models: dict[str, QuantileModel], idx: np.ndarray):
        need = [int(i) for i in idx if (e, int(i)) not in self._pred]
        if need:
            rows = np.array(need)
            lq = predict_quantiles(models["load"], self._X["load"][rows])
            pq = predict_quantiles(models["pv"], self._X["pv"][rows])
            for n, i in enumerate(need):
                self._pred[(e, i)] = (
                    {q: float(lq[q][n]) for q in QUANTILES},
                    {q: float(pq[q][n]) for q in QUANTILES},
                )
        return [self._pred[(e, int(i))] for i in idx]

    def forecast(self, start: datetime, horizon: int) -> ForecastSet:
        i0 = self.ds.index_of(start)
        if i0 < 0 or i0 + horizon > len(self.ds):
            raise ForecastError(f"window {start.isoformat()} + {horizon} h falls outside the dataset")
        e = self._epoch_index(i0)
        models = self._models_at(e)
        if models is None:
            return perfect(self.ds, start, horizon)
        idx = np.arange(i0, i0 + horizon)
        preds = self._predict(e, models, idx)
        load = {q: np.array([p[0][q] for p in preds]) for q in QUANTILES}
        pv = {q: np.array([p[1][q] for p in preds]) for q in QUANTILES}
        return ForecastSet(start, horizon, load, pv)

    def evaluation_pairs(self) -> tuple[np.ndarray, dict[str, dict[float, np.ndarray]]]:
        """Predictions for every dataset hour that has a trained model.

        Returns the hour indices and, per series, the quantile arrays.
        """
        by_epoch: dict[int, list[int]] = {}
        for i in range(len(self.ds)):
            by_epoch.setdefault(self._epoch_index(i), []).append(i)
        keep: list[int] = []
        out: dict[str, dict[float, list[float]]] = {"load": {q: [] for q in QUANTILES}, "pv": {q: [] for q in QUANTILES}}
        for e, hours in by_epoch.items():
            models = self._models_at(e)
            if models is None:
                continue
            for i, (lq, pq) in zip(hours, self._predict(e, models, np.array(hours))):
                keep.append(i)
                for q in QUANTILES:
                    out["load"][q].append(lq[q])
                    out["pv"][q].append(pq[q])
        arrays = {s: {q: np.array(v) for q, v in d.items()} for s, d in out.items()}
        return np.array(keep, dtype=int), arrays
