"""Observation weights for the alternating booster.

Every forecast of an alternating model is a fixed linear combination of the
training targets, ``predict(x) == w(x) @ y_train``. The weights are built by
propagating, step by step,

    W_t = W_{t-1} + rate * A_t (I - W_{t-1})

where ``W_0`` is the uniform ``1/N`` matrix and ``A_t`` maps residuals to the
step's fitted values (leaf averaging for trees, the hat matrix for a linear
term). Query rows follow the same recursion with their own ``A_t`` rows.
Increments are accumulated per channel, so ``w_base + w_linear + w_tree``
is the total weight.

The running state is a dense N x N matrix; training sets larger than
``MAX_TRAIN_ROWS`` are refused.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .booster import BoostModel, Ensemble, predict
from .data import Dataset

MAX_TRAIN_ROWS = 4000


class UnsupportedModel(ValueError):
    pass


@dataclass(frozen=True)
class WeightAttribution:
    """Weight matrices of shape (rows queried, N_train) by channel."""

    w_base: np.ndarray
    w_linear: np.ndarray
    w_tree: np.ndarray

    @property
    def w_total(self) -> np.ndarray:
        return self.w_base + self.w_linear + self.w_tree

    def forecast(self, y_train) -> np.ndarray:
        return self.w_total @ np.asarray(y_train, dtype=np.float64)


def _check(model, data: Dataset):
    if isinstance(model, Ensemble):
        raise UnsupportedModel("observation weights are computed for single models, not ensembles")
    if model.variant != "alternating":
        raise UnsupportedModel(
            "observation weights are only implemented for the alternating variant; "
            "for the competition variant they are feasible but not implemented")
    if model.calibration_beta is not None:
        raise UnsupportedModel("calibrated models are not supported")
    if data.n != model.n_train:
        raise ValueError(f"model was trained on {model.n_train} rows, got {data.n}")
    if data.n > MAX_TRAIN_ROWS:
        raise ValueError(f"dense weight state refused for N = {data.n} > {MAX_TRAIN_ROWS}")


def _step_response(step, resid_rows, z_train, z_rows):
    """Rows of ``A_t @ R`` at the points ``z_rows``, with ``R = I - W``.

    Exploits the structure of ``A_t`` (leaf blocks or a rank-two hat matrix)
    instead of materializing it.
    """
    learner = step.learner
    if step.kind == "tree":
        leaves = learner.apply(z_rows)
        out = np.empty((z_rows.shape[0], resid_rows.shape[1]))
        for leaf in np.unique(leaves):
            members = learner.members[leaf]
            out[leaves == leaf] = resid_rows[members].mean(axis=0)
        return out
    rows = learner.fit_rows
    fit_part = resid_rows[rows]
    out = np.broadcast_to(fit_part.mean(axis=0), (z_rows.shape[0], resid_rows.shape[1])).copy()
    if learner.column is not None:
        u_fit = z_train[rows, learner.column] - learner.fit_mean_x
        u_query = z_rows[:, learner.column] - learner.fit_mean_x
        out += np.outer(u_query, (u_fit @ fit_part) / learner.fit_sxx)
    return out


def _propagate(model: BoostModel, z_train, z_query):
    n = z_train.shape[0]
    m = 0 if z_query is None else z_query.shape[0]
    w = np.full((n, n), 1.0 / n)
    eye = np.eye(n)
    q_lin = np.zeros((m, n))
    q_tree = np.zeros((m, n))
    t_lin = np.zeros((n, n))
    t_tree = np.zeros((n, n))
    for step in model.steps:
        resid = eye - w
        inc_train = step.rate * _step_response(step, resid, z_train, z_train)
        if m:
            inc_query = step.rate * _step_response(step, resid, z_train, z_query)
            (q_tree if step.kind == "tree" else q_lin)[...] += inc_query
        (t_tree if step.kind == "tree" else t_lin)[...] += inc_train
        w = w + inc_train
    base_train = np.full((n, n), 1.0 / n)
    train = WeightAttribution(base_train, t_lin, t_tree)
    query = None if not m else WeightAttribution(np.full((m, n), 1.0 / n), q_lin, q_tree)
    return train, query


def train_weight_state(model: BoostModel, data: Dataset) -> WeightAttribution:
    """Final N x N weight state on the training rows, split by channel."""
    _check(model, data)
    z = model.standardizer.transform_x(data.x)
    return _propagate(model, z, None)[0]


def test_weights(model: BoostModel, data_train: Dataset, x_query) -> WeightAttribution:
    """Weights on the training targets for each raw query row."""
    _check(model, data_train)
    x_query = np.asarray(x_query, dtype=np.float64)
    if x_query.ndim == 1:
        x_query = x_query[None, :]
    if x_query.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} columns, got {x_query.shape[1]}")
    z_train = model.standardizer.transform_x(data_train.x)
    z_query = model.standardizer.transform_x(x_query)
    return _propagate(model, z_train, z_query)[1]


# The name above is the public API; keep pytest from collecting it.
test_weights.__test__ = False


def check_identity(model: BoostModel, attr: WeightAttribution, y_train, x_query, tol: float = 1e-8) -> float:
    """Max |w @ y - predict| over the queried rows; raises if above ``tol``."""
    gap = float(np.max(np.abs(attr.forecast(y_train) - predict(model, x_query)), initial=0.0))
    if not gap < tol:
        raise ArithmeticError(f"weight identity violated: max gap {gap:.3e} >= {tol:g}")
    return gap


def top_weighted_windows(attr: WeightAttribution, row: int, window: int = 1):
    """Windows of consecutive training rows ranked by summed total weight.

    Returns dicts with ``start``, ``total`` and per-channel sums, sorted by
    descending total with ties broken by the lower start index.
    """
    n = attr.w_total.shape[1]
    if window < 1:
        raise ValueError("window must be >= 1")
    if window > n:
        raise ValueError(f"window {window} exceeds the {n} training rows")
    view = np.lib.stride_tricks.sliding_window_view
    sums = {name: view(getattr(attr, name)[row], window).sum(axis=1)
            for name in ("w_total", "w_base", "w_linear", "w_tree")}
    order = sorted(range(n - window + 1), key=lambda s: (-sums["w_total"][s], s))
    return [{"start": s, "total": float(sums["w_total"][s]), "base": float(sums["w_base"][s]),
             "linear": float(sums["w_linear"][s]), "tree": float(sums["w_tree"][s])} for s in order]


def centered_moving_average(w, window: int) -> np.ndarray:
    """Centered moving average with the window truncated at the edges."""
    w = np.asarray(w, dtype=np.float64)
    if window < 1:
        raise ValueError("window must be >= 1")
    lo = (window - 1) // 2
    hi = window - 1 - lo
    csum = np.concatenate([[0.0], np.cumsum(w)])
    idx = np.arange(w.size)
    start = np.maximum(idx - lo, 0)
    stop = np.minimum(idx + hi + 1, w.size)
    return (csum[stop] - csum[start]) / (stop - start)
