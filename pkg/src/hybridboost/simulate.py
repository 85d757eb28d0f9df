"""Monte Carlo benchmark: eight synthetic signals, calibrated noise, test R^2.

Predictors are six i.i.d. Uniform[0, 1] columns. Noise is Gaussian with
variance ``Var(f) / snr``, where ``Var(f)`` is estimated once per
``(dgp, seed)`` on a dedicated 100,000-point calibration draw.

Seed paths (see :func:`hybridboost.data.rng_stream`): calibration draws use
``(seed, "dgp_calibration", dgp_index, 0)``; training and test rows use
``(seed, "dgp_train" | "dgp_test", rep, dgp_index * 10**7 + n_rows)``. The
Gaussian draw is standardized and scaled afterwards, so cells that differ
only in SNR share their predictors and noise shape.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .booster import AlternatingParams, CompetitionParams, fit_alternating, fit_competition, fit_ensemble, predict
from .data import Dataset, rng_stream

log = logging.getLogger(__name__)

DGPS = ("linear", "friedman1", "product_log", "mixture", "trig_log", "soft_radial", "step_ucurve", "rotated_sine")
METHODS = ("ols", "lgb_trees_only", "lgb_plus", "lgb_alt")
N_PREDICTORS = 6
CALIBRATION_SIZE = 100_000


@lru_cache(maxsize=None)
def _mixture_scales():
    """Population stds of the two mixture components (exact / quadrature)."""
    from scipy import integrate

    lin_sd = math.sqrt((2.0**2 + 1.5**2) / 12.0)
    m1 = integrate.dblquad(lambda u, v: np.sin(np.pi * u * v), 0, 1, 0, 1, epsabs=1e-13, epsrel=1e-13)[0]
    m2 = integrate.dblquad(lambda u, v: np.sin(np.pi * u * v) ** 2, 0, 1, 0, 1, epsabs=1e-13, epsrel=1e-13)[0]
    # Var(2 (x - 1/2)^2) = 4 (1/80 - 1/144) = 1/45
    nonlin_sd = math.sqrt(9.0 * (m2 - m1 * m1) + 1.0 / 45.0)
    return lin_sd, nonlin_sd


def signal_matrix(name: str, x) -> np.ndarray:
    """Noise-free signal for every row of an (n, 6) matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    x1, x2, x3, x4, x5 = (x[:, j] for j in range(5))
    if name == "linear":
        return 2 * (x1 - 0.5) - (x2 - 0.5) + 3 * (x3 - 0.5) + 1.5 * (x4 - 0.5) + 0.5 * (x5 - 0.5)
    if name == "friedman1":
        return 10 * np.sin(np.pi * x1 * x2) + 20 * (x3 - 0.5) ** 2 + 10 * x4 + 5 * x5
    if name == "product_log":
        return x1 * x2 + np.log(x3 + x4 + 2)
    if name == "mixture":
        lin_sd, nonlin_sd = _mixture_scales()
        return (2 * x1 + 1.5 * x2) / lin_sd + (3 * np.sin(np.pi * x3 * x4) + 2 * (x5 - 0.5) ** 2) / nonlin_sd
    if name == "trig_log":
        return np.sin(np.pi * (x1 + x2 + x3)) + np.log(1 + x4**2)
    if name == "soft_radial":
        return 1.0 / (1.0 + 5.0 * np.sum((x - 0.5) ** 2, axis=1))
    if name == "step_ucurve":
        x6 = x[:, 5]
        return (3.0 * ((x1 > 0.3) & (x1 < 0.7)) + 2.0 * (x2 > 0.5) - 1.0 * (x2 < 0.2)
                + 4 * (x3 - 0.5) ** 2 + 3 * np.abs(x4 - 0.5)
                + 2.0 * ((x5 > 0.25) & (x5 < 0.75) & (x6 > 0.5)))
    if name == "rotated_sine":
        return np.sin(3 * (x1 + x2 + x3 + x4))
    raise ValueError(f"unknown DGP {name!r}")


def signal(name: str, x_row) -> float:
    return float(signal_matrix(name, np.asarray(x_row, dtype=np.float64)[None, :])[0])


@dataclass(frozen=True)
class DgpSpec:
    name: str
    snr: float
    n_train: int
    n_test: int = 1000
    n_reps: int = 10
    noiseless: bool = False
    p: int = N_PREDICTORS

    def __post_init__(self):
        if self.name not in DGPS:
            raise ValueError(f"unknown DGP {self.name!r}")
        if not self.snr > 0:
            raise ValueError("snr must be > 0")
        if self.p != N_PREDICTORS:
            raise ValueError("the benchmark DGPs use exactly 6 predictors")


@lru_cache(maxsize=64)
def signal_variance(name: str, seed: int) -> float:
    """Sample variance of the signal on the calibration draw for ``(name, seed)``."""
    rng = rng_stream(seed, "dgp_calibration", DGPS.index(name), 0)
    x = rng.uniform(size=(CALIBRATION_SIZE, N_PREDICTORS))
    return float(np.var(signal_matrix(name, x), ddof=1))


def noise_sd(spec: DgpSpec, seed: int) -> float:
    return 0.0 if spec.noiseless else math.sqrt(signal_variance(spec.name, seed) / spec.snr)


def _draw(spec: DgpSpec, purpose: str, rep: int, n: int, seed: int) -> Dataset:
    code = DGPS.index(spec.name) * 10**7 + n
    rng = rng_stream(seed, purpose, rep, code)
    x = rng.uniform(size=(n, N_PREDICTORS))
    eps = rng.standard_normal(n)
    y = signal_matrix(spec.name, x) + noise_sd(spec, seed) * eps
    return Dataset(x, y, tuple(f"x{j + 1}" for j in range(N_PREDICTORS)))


def generate(spec: DgpSpec, rep: int, seed: int):
    """Training and test datasets for one replication."""
    return _draw(spec, "dgp_train", rep, spec.n_train, seed), _draw(spec, "dgp_test", rep, spec.n_test, seed)


@dataclass(frozen=True)
class OlsFit:
    intercept: float
    coef: np.ndarray

    def predict(self, x) -> np.ndarray:
        return self.intercept + np.asarray(x, dtype=np.float64) @ self.coef


def fit_ols(train: Dataset) -> OlsFit:
    """Least squares with intercept on all columns."""
    n, p = train.x.shape
    if n <= p:
        raise ValueError(f"OLS needs more rows than columns ({n} <= {p})")
    design = np.column_stack([np.ones(n), train.x])
    sol, _, rank, _ = np.linalg.lstsq(design, train.y, rcond=None)
    if rank < p + 1:
        raise np.linalg.LinAlgError(f"design matrix is rank deficient (rank {rank} < {p + 1})")
    return OlsFit(float(sol[0]), sol[1:])


def r2_score(y, pred) -> float:
    """Out-of-sample R^2 with SST about the mean of ``y``."""
    y = np.asarray(y, dtype=np.float64)
    resid = y - np.asarray(pred, dtype=np.float64)
    dev = y - y.mean()
    return 1.0 - float(resid @ resid) / float(dev @ dev)


@dataclass
class BenchConfig:
    competition: CompetitionParams = field(default_factory=lambda: CompetitionParams(calibrate=False))
    alternating: AlternatingParams = field(default_factory=AlternatingParams)
    ensemble: int = 1

    def to_dict(self):
        return {"competition": asdict(self.competition), "alternating": asdict(self.alternating),
                "ensemble": self.ensemble, "r2_sst_about": "test mean"}


def fit_method(method: str, train: Dataset, config: BenchConfig, seed: int):
    """Fit one benchmark method; returns a callable mapping x to forecasts."""
    if method == "ols":
        return fit_ols(train).predict
    if method == "lgb_plus":
        if config.ensemble > 1:
            model = fit_ensemble(train, "competition", config.competition, config.ensemble, seed)
        else:
            model = fit_competition(train, config.competition, seed)
    elif method == "lgb_alt":
        model = fit_alternating(train, config.alternating, seed)
    elif method == "lgb_trees_only":
        model = fit_alternating(train, replace(config.alternating, eta_lin=0.0), seed)
    else:
        raise ValueError(f"unknown method {method!r}")
    return lambda x: predict(model, x)


@dataclass
class BenchResult:
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def cell(self, dgp, snr, n, method) -> dict:
        for row in self.rows:
            if (row["dgp"], row["snr"], row["n"], row["method"]) == (dgp, snr, n, method):
                return row
        raise KeyError((dgp, snr, n, method))

    def mean(self, dgp, snr, n, method) -> float:
        return self.cell(dgp, snr, n, method)["r2_mean"]

    def to_frame(self):
        import pandas as pd

        cols = ["dgp", "snr", "n", "method", "r2_mean", "r2_std", "n_reps"]
        return pd.DataFrame([{c: r[c] for c in cols} for r in self.rows], columns=cols)


def run_bench(grid: Iterable[DgpSpec], methods: Sequence[str] = METHODS, seed: int = 0,
              config: BenchConfig | None = None) -> BenchResult:
    """Test R^2 mean and std over replications for every (cell, method).

    A method that raises inside a cell is recorded in ``failures`` and that
    (cell, method) is skipped; other cells still run.
    """
    config = config or BenchConfig()
    grid = list(grid)
    if not grid:
        raise ValueError("empty benchmark grid")
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ValueError(f"unknown methods {bad}")
    result = BenchResult()
    for spec in grid:
        scores = {m: [] for m in methods}
        preds = {m: [] for m in methods}
        failed = set()
        for rep in range(spec.n_reps):
            train, test = generate(spec, rep, seed)
            for method in methods:
                if method in failed:
                    continue
                try:
                    forecast = fit_method(method, train, config, seed + rep)(test.x)
                except Exception as exc:  # a failed fit aborts this cell only
                    log.warning("%s %s: %s", spec, method, exc)
                    result.failures.append({"dgp": spec.name, "snr": spec.snr, "n": spec.n_train,
                                            "method": method, "rep": rep, "error": repr(exc)})
                    failed.add(method)
                    continue
                scores[method].append(r2_score(test.y, forecast))
                preds[method].append(forecast)
        for method in methods:
            if method in failed:
                continue
            s = np.asarray(scores[method])
            result.rows.append({
                "dgp": spec.name, "snr": spec.snr, "n": spec.n_train, "method": method,
                "r2_mean": float(s.mean()), "r2_std": float(s.std(ddof=1)) if s.size > 1 else 0.0,
                "n_reps": int(s.size), "r2": s.tolist(), "predictions": preds[method],
            })
    return result


def table_grid(dgps=DGPS, snrs=(0.5, 1.0, 2.0), sizes=(250, 500, 1000), n_test=1000, n_reps=10):
    return [DgpSpec(d, s, n, n_test, n_reps) for d in dgps for n in sizes for s in snrs]
