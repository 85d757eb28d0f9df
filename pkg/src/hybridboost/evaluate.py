"""Expanding-window pseudo-out-of-sample evaluation on time-ordered rows.

Row ``i`` holds predictors known at period ``i`` and a target that the
caller has already shifted ``h`` periods ahead, so it is realized at
``i + h``. A window with training end ``e`` fits on rows ``0..e`` and
forecasts rows ``e + h`` through ``e + h + refit_every - 1``: a forecast at
origin ``tau`` never uses a row whose target is realized after ``tau``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .booster import fit, fit_ensemble, predict, predict_decomposed
from .data import Dataset
from .simulate import fit_ols


@dataclass(frozen=True)
class WindowPlan:
    first_train_end: int
    refit_every: int = 8
    horizon: int = 1
    last_target: int | None = None

    def windows(self, n_rows: int):
        """``(train_end, forecast_rows)`` pairs, strictly expanding."""
        if self.refit_every < 1 or self.horizon < 1:
            raise ValueError("refit_every and horizon must be >= 1")
        last = n_rows - 1 if self.last_target is None else min(self.last_target, n_rows - 1)
        out = []
        end = self.first_train_end
        while end + self.horizon <= last:
            start = end + self.horizon
            stop = min(start + self.refit_every - 1, last)
            out.append((end, np.arange(start, stop + 1)))
            end += self.refit_every
        return out


@dataclass
class MethodConfig:
    """``method`` is one of mean, ols, competition, alternating."""

    method: str = "alternating"
    hyper: object = None
    seed: int = 0
    ensemble: int = 1


@dataclass
class EvalResult:
    period: np.ndarray
    actual: np.ndarray
    forecast: np.ndarray
    linear: np.ndarray
    tree: np.ndarray
    train_end: np.ndarray
    rmse: float
    rmse_ratio: float | None = None
    benchmark_rmse: float | None = None
    windows: list = field(default_factory=list)

    def to_frame(self):
        import pandas as pd

        return pd.DataFrame({"period": self.period, "actual": self.actual, "forecast": self.forecast,
                             "linear_component": self.linear, "tree_component": self.tree})


def _fit_window(train: Dataset, config: MethodConfig, x_out):
    m = x_out.shape[0]
    if config.method == "mean":
        return np.full(m, train.y.mean()), np.zeros(m), np.zeros(m)
    if config.method == "ols":
        pred = fit_ols(train).predict(x_out)
        return pred, pred - train.y.mean(), np.zeros(m)
    if config.ensemble > 1:
        model = fit_ensemble(train, config.method, config.hyper, config.ensemble, config.seed)
    else:
        model = fit(train, config.method, config.hyper, config.seed)
    dec = predict_decomposed(model, x_out)
    return predict(model, x_out), dec.linear, dec.tree


def rmse(a, b) -> float:
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.sqrt(np.mean(d * d)))


def expanding_eval(data: Dataset, plan: WindowPlan, config: MethodConfig | None = None,
                   benchmark=None) -> EvalResult:
    """Refit on schedule and forecast each window's out-of-sample rows.

    ``benchmark`` is an optional length-N vector of competing forecasts; the
    RMSE ratio is computed over the forecast rows. For the ``ols`` method
    the linear component is the fit minus the training mean.
    """
    config = config or MethodConfig()
    windows = plan.windows(data.n)
    if not windows:
        raise ValueError("plan produces no forecast rows")
    parts = []
    for end, rows in windows:
        if end + 1 < 3:
            raise ValueError(f"window ending at row {end} is too small to fit")
        train = data.rows(np.arange(end + 1))
        pred, lin, tree = _fit_window(train, config, data.x[rows])
        parts.append((rows, pred, lin, tree, np.full(rows.size, end)))
    period = np.concatenate([p[0] for p in parts])
    forecast = np.concatenate([p[1] for p in parts])
    actual = data.y[period]
    res = EvalResult(period, actual, forecast, np.concatenate([p[2] for p in parts]),
                     np.concatenate([p[3] for p in parts]), np.concatenate([p[4] for p in parts]),
                     rmse(actual, forecast), windows=[(e, r.tolist()) for e, r in windows])
    if benchmark is not None:
        bench = np.asarray(benchmark, dtype=np.float64)[period]
        res.benchmark_rmse = rmse(actual, bench)
        res.rmse_ratio = res.rmse / res.benchmark_rmse if res.benchmark_rmse > 0 else float("nan")
    return res
