"""Datasets, standardization, and seeded subsample bookkeeping.

Every random draw in the library goes through :func:`rng_stream`, which
derives an independent ``numpy.random.Generator`` from a counter-style seed
path ``(base_seed, purpose, step, member)`` via ``numpy.random.SeedSequence``
(the purpose string is mapped to a fixed integer code, see ``PURPOSES``).
The derivation is stable, so every fit, permutation and simulation draw is
reproducible from its seed path alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

PURPOSES = {
    "subsample": 1,
    "features": 2,
    "permute": 3,
    "dgp_train": 4,
    "dgp_test": 5,
    "dgp_calibration": 6,
    "noise": 7,
}


class DataError(ValueError):
    """Raised for malformed or unusable input data."""


def rng_stream(seed: int, purpose: str, step: int = 0, member: int = 0) -> np.random.Generator:
    """Return the generator for one seed path."""
    try:
        code = PURPOSES[purpose]
    except KeyError:
        raise ValueError(f"unknown RNG purpose {purpose!r}") from None
    seq = np.random.SeedSequence(int(seed), spawn_key=(code, int(step), int(member)))
    return np.random.default_rng(seq)


def _frozen(a, dtype=np.float64) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dataset:
    """Predictor matrix ``x`` (N x P) and target ``y`` (N,).

    ``groups`` maps a group id to the column indices it aggregates; groups
    must be disjoint but need not cover every column.
    """

    x: np.ndarray
    y: np.ndarray
    column_names: tuple = ()
    groups: Mapping[str, tuple] | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if x.ndim != 2:
            raise DataError("x must be a 2-D matrix")
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise DataError(f"y must be a vector of length {x.shape[0]}")
        n, p = x.shape
        if n < 2 or p < 1:
            raise DataError(f"need at least 2 rows and 1 column, got {n}x{p}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DataError("non-finite entries in dataset")
        names = tuple(self.column_names) or tuple(f"x{j}" for j in range(p))
        if len(names) != p:
            raise DataError(f"{len(names)} column names for {p} columns")
        groups = None
        if self.groups is not None:
            groups = {}
            seen = set()
            for gid, cols in self.groups.items():
                cols = tuple(int(c) for c in cols)
                if not cols:
                    raise DataError(f"group {gid!r} is empty")
                for c in cols:
                    if not 0 <= c < p:
                        raise DataError(f"group {gid!r} references column {c} outside 0..{p - 1}")
                    if c in seen:
                        raise DataError(f"column {c} appears in more than one group")
                    seen.add(c)
                groups[str(gid)] = cols
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "column_names", names)
        object.__setattr__(self, "groups", groups)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def rows(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.x[idx], self.y[idx], self.column_names, self.groups)

    def with_y(self, y) -> "Dataset":
        return Dataset(self.x, y, self.column_names, self.groups)

    def feature_groups(self) -> dict:
        """Groups if defined, otherwise one singleton group per column."""
        if self.groups is not None:
            return dict(self.groups)
        return {name: (j,) for j, name in enumerate(self.column_names)}


@dataclass(frozen=True)
class Standardizer:
    """Column means/stds of the predictors plus the target's mean/std.

    Columns with zero sample variance are flagged ``degenerate``; they keep
    ``std == 1`` so that they are centered but not scaled.
    """

    means: np.ndarray
    stds: np.ndarray
    degenerate: np.ndarray
    y_mean: float = 0.0
    y_std: float = 1.0

    def transform_x(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.means.shape[0]:
            raise DataError(f"expected {self.means.shape[0]} columns, got shape {x.shape}")
        return (x - self.means) / self.stds

    def inverse_x(self, z) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.stds + self.means

    def transform_y(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) - self.y_mean) / self.y_std

    def inverse_y(self, z) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.y_std + self.y_mean

    def to_dict(self) -> dict:
        return {
            "means": [float(v) for v in self.means],
            "stds": [float(v) for v in self.stds],
            "degenerate": [bool(v) for v in self.degenerate],
            "y_mean": float(self.y_mean),
            "y_std": float(self.y_std),
        }

    @classmethod
    def from_dict(cls, d) -> "Standardizer":
        return cls(
            means=_frozen(d["means"]),
            stds=_frozen(d["stds"]),
            degenerate=_frozen(d["degenerate"], dtype=bool),
            y_mean=float(d["y_mean"]),
            y_std=float(d["y_std"]),
        )

    @classmethod
    def identity(cls, p: int) -> "Standardizer":
        return cls(_frozen(np.zeros(p)), _frozen(np.ones(p)), _frozen(np.zeros(p, dtype=bool)))


def _mean_std(a: np.ndarray):
    mean = a.mean(axis=0)
    std = a.std(axis=0, ddof=1)
    with np.errstate(invalid="ignore", over="ignore"):
        degenerate = (np.ptp(a, axis=0) == 0) | ~(std > 0) | ~np.isfinite(std)
    std = np.where(degenerate, 1.0, std)
    return mean, std, degenerate


def standardize_fit(data: Dataset, standardize_target: bool = True):
    """Fit a :class:`Standardizer` on ``data`` and return it with the scaled data.

    Sample standard deviations (``ddof=1``) are used. With
    ``standardize_target=False`` the target passes through unchanged.
    """
    if data.n < 2:
        raise DataError("cannot standardize fewer than 2 rows")
    means, stds, degenerate = _mean_std(data.x)
    y_mean, y_std = 0.0, 1.0
    if standardize_target:
        m, s, d = _mean_std(data.y[:, None])
        y_mean, y_std = float(m[0]), float(s[0])
    st = Standardizer(_frozen(means), _frozen(stds), _frozen(degenerate, dtype=bool), y_mean, y_std)
    return st, Dataset(st.transform_x(data.x), st.transform_y(data.y), data.column_names, data.groups)


@dataclass(frozen=True)
class SubsampleSplit:
    in_bag: np.ndarray
    out_of_bag: np.ndarray
    seed_path: tuple = field(default=())


def draw_subsample(n: int, q: float, seed: int, step: int = 0, member: int = 0) -> SubsampleSplit:
    """Uniform without-replacement row subsample of size ``floor(q * n)``.

    Both index sets are returned sorted. ``q == 1`` returns every row in-bag
    and an empty out-of-bag set without consuming randomness.
    """
    if not 0 < q <= 1:
        raise ValueError(f"subsample fraction must be in (0, 1], got {q}")
    k = int(np.floor(q * n))
    if k < 2:
        raise ValueError(f"subsample of floor({q}*{n}) = {k} rows is too small")
    path = (int(seed), "subsample", int(step), int(member))
    if k == n:
        return SubsampleSplit(_frozen(np.arange(n), np.intp), _frozen([], np.intp), path)
    rng = rng_stream(seed, "subsample", step, member)
    mask = np.zeros(n, dtype=bool)
    mask[rng.choice(n, size=k, replace=False)] = True
    return SubsampleSplit(_frozen(np.flatnonzero(mask), np.intp), _frozen(np.flatnonzero(~mask), np.intp), path)


def draw_feature_subset(p: int, rho: float, seed: int, step: int = 0, member: int = 0) -> np.ndarray:
    """Uniform without-replacement column subset, sorted.

    The size is ``floor(rho * p)`` but never below one column.
    """
    if not 0 < rho <= 1:
        raise ValueError(f"feature fraction must be in (0, 1], got {rho}")
    if p < 1:
        raise ValueError("need at least one column")
    k = max(1, int(np.floor(rho * p)))
    if k == p:
        return np.arange(p)
    rng = rng_stream(seed, "features", step, member)
    return np.sort(rng.choice(p, size=k, replace=False))


def load_csv(path, target: str, groups_path=None, exclude: Sequence[str] = ()) -> Dataset:
    """Read a numeric CSV with a header row; ``target`` names the y column."""
    import pandas as pd

    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if target not in frame.columns:
        raise DataError(f"target column {target!r} not found in {path}")
    features = [c for c in frame.columns if c != target and c not in exclude]
    x = _numeric(frame[features], path)
    y = _numeric(frame[[target]], path)[:, 0]
    groups = read_groups(groups_path, features) if groups_path else None
    return Dataset(x, y, tuple(features), groups)


def load_features(path, columns: Sequence[str]) -> np.ndarray:
    """Read the named feature columns from a CSV, failing on any missing one."""
    import pandas as pd

    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise DataError("missing columns: " + ", ".join(missing))
    return _numeric(frame[list(columns)], path)


def _numeric(frame, path) -> np.ndarray:
    import pandas as pd

    try:
        out = frame.apply(pd.to_numeric, errors="raise").to_numpy(dtype=np.float64)
    except (ValueError, TypeError) as exc:
        raise DataError(f"non-numeric cell in {path}: {exc}") from exc
    if not np.all(np.isfinite(out)):
        raise DataError(f"missing or non-finite values in {path}")
    return out


def read_groups(path, column_names: Sequence[str]) -> dict:
    """Parse a group file: one ``group_id: col_a, col_b`` line per group.

    Blank lines and lines starting with ``#`` are ignored.
    """
    index = {name: j for j, name in enumerate(column_names)}
    groups = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            gid, sep, rest = line.partition(":")
            if not sep:
                raise DataError(f"{path}:{lineno}: expected 'group: col, col'")
            cols = [c.strip() for c in rest.split(",") if c.strip()]
            unknown = [c for c in cols if c not in index]
            if unknown:
                raise DataError(f"{path}:{lineno}: unknown columns " + ", ".join(unknown))
            groups[gid.strip()] = tuple(index[c] for c in cols)
    return groups
