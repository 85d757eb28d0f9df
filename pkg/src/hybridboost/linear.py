"""Greedy univariate linear updates.

One update screens candidate columns by absolute Pearson correlation with the
residuals, then fits a one-variable OLS line on the chosen column. Repeated
with a small learning rate this is forward stagewise regression.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LinearTerm:
    """A fitted line ``alpha + beta * x[column]``.

    ``column is None`` marks an intercept-only no-op (every candidate column
    was constant on the fitting rows); it predicts ``alpha`` everywhere.
    """

    column: int | None
    alpha: float
    beta: float
    fit_rows: np.ndarray
    fit_mean_x: float
    fit_sxx: float

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if self.column is None:
            return np.full(x.shape[0], self.alpha)
        col = x[:, self.column]
        if not np.all(np.isfinite(col)):
            raise ValueError("non-finite feature value")
        return self.alpha + self.beta * col

    def to_dict(self) -> dict:
        return {
            "column": self.column,
            "alpha": float(self.alpha),
            "beta": float(self.beta),
            "fit_mean_x": float(self.fit_mean_x),
            "fit_sxx": float(self.fit_sxx),
            "fit_rows": [int(j) for j in self.fit_rows],
        }

    @classmethod
    def from_dict(cls, d) -> "LinearTerm":
        col = d["column"]
        return cls(None if col is None else int(col), float(d["alpha"]), float(d["beta"]),
                   np.asarray(d["fit_rows"], dtype=np.intp), float(d["fit_mean_x"]), float(d["fit_sxx"]))


def abs_correlations(x, r) -> np.ndarray:
    """|Pearson correlation| of each column of ``x`` with ``r``.

    Constant columns get ``nan``. Sample (n - 1) moments are used; the
    normalization cancels in the argmax.
    """
    x = np.asarray(x, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    xc = x - x.mean(axis=0)
    rc = r - r.mean()
    n1 = r.shape[0] - 1
    sx = np.sqrt(np.einsum("ij,ij->j", xc, xc) / n1)
    sr = np.sqrt(rc @ rc / n1)
    cov = rc @ xc / n1
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = np.abs(cov / (sx * sr))
    corr[np.ptp(x, axis=0) == 0] = np.nan
    return corr


def select_feature(x, r, candidates=None) -> int | None:
    """Candidate column with the largest |corr| with ``r``.

    Returns ``None`` when every candidate is constant on these rows. When the
    residuals themselves are constant the correlation is undefined; the
    lowest-index usable candidate is returned so the caller can fit a no-op.
    Ties go to the lowest column index.
    """
    x = np.asarray(x, dtype=np.float64)
    cand = np.arange(x.shape[1]) if candidates is None else np.sort(np.asarray(candidates, dtype=np.intp))
    if cand.size == 0:
        raise ValueError("no candidate columns")
    if x.shape[0] < 3:
        raise ValueError("correlation screening needs at least 3 rows")
    usable = cand[np.ptp(x[:, cand], axis=0) > 0]
    if usable.size == 0:
        return None
    r = np.asarray(r, dtype=np.float64)
    if np.ptp(r) == 0:
        return int(usable[0])
    corr = abs_correlations(x[:, usable], r)
    return int(usable[int(np.argmax(corr))])


def fit_linear(x_col, r, column: int = 0, fit_rows=None) -> LinearTerm:
    """Closed-form univariate OLS of ``r`` on ``x_col``.

    Constant residuals give ``beta = 0`` and ``alpha = mean(r)`` exactly.
    """
    x_col = np.asarray(x_col, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    fit_rows = np.arange(r.shape[0]) if fit_rows is None else np.asarray(fit_rows, dtype=np.intp)
    xbar = float(x_col.mean())
    xc = x_col - xbar
    sxx = float(xc @ xc)
    if not sxx > 0 or np.ptp(x_col) == 0:
        raise ValueError("fit_linear: column has zero variance on the fitting rows")
    rbar = float(r.mean())
    if np.ptp(r) == 0:
        return LinearTerm(column, rbar, 0.0, fit_rows, xbar, sxx)
    beta = float(xc @ (r - rbar)) / sxx
    return LinearTerm(column, rbar - beta * xbar, beta, fit_rows, xbar, sxx)


def intercept_only(r, fit_rows=None) -> LinearTerm:
    r = np.asarray(r, dtype=np.float64)
    fit_rows = np.arange(r.shape[0]) if fit_rows is None else np.asarray(fit_rows, dtype=np.intp)
    return LinearTerm(None, float(r.mean()), 0.0, fit_rows, 0.0, 0.0)


def predict_linear(term: LinearTerm, x_row) -> float:
    return float(term.predict(np.asarray(x_row, dtype=np.float64)[None, :])[0])


def hat_weight_matrix(term: LinearTerm, x, x_train) -> np.ndarray:
    """Hat-matrix rows of the fitted line at each row of ``x``.

    ``x_train`` is the full training matrix; entries off ``fit_rows`` are 0.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    rows = term.fit_rows
    out = np.zeros((x.shape[0], np.asarray(x_train).shape[0]))
    out[:, rows] = 1.0 / rows.size
    if term.column is not None:
        u_query = x[:, term.column] - term.fit_mean_x
        u_train = np.asarray(x_train, dtype=np.float64)[rows, term.column] - term.fit_mean_x
        out[:, rows] += np.outer(u_query, u_train) / term.fit_sxx
    return out


def hat_weight_row(term: LinearTerm, x_row, x_train) -> np.ndarray:
    """Weights ``w`` with ``w @ r_fit == predict_linear(term, x_row)``.

    The training length is taken from ``x_train``, which also supplies the
    fitting rows' values of the selected column.
    """
    return hat_weight_matrix(term, x_row, x_train)[0]
