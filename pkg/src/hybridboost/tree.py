"""Shallow regression trees fit to boosting residuals.

Splits are searched exactly over the midpoints between consecutive distinct
values of each column. Ties in SSE reduction go to the lowest column index,
then the smallest threshold; rows with ``value <= threshold`` route left.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAF = -1
# a split must remove more than this fraction of the node's SSE
_MIN_REL_GAIN = 1e-12


@dataclass(frozen=True)
class ShallowTree:
    """Array-encoded binary tree.

    Node ``i`` is internal when ``feature[i] >= 0``; leaves carry ``value``
    and the global indices of the training rows they hold in ``members``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    members: tuple
    fit_rows: np.ndarray
    max_depth: int
    min_leaf: int

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature == LEAF))

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self.feature), dtype=int)
        for i in range(len(self.feature)):
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def split_columns(self) -> set:
        return {int(f) for f in self.feature if f != LEAF}

    def apply(self, x) -> np.ndarray:
        """Leaf node index reached by every row of ``x``."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite feature value")
        node = np.zeros(x.shape[0], dtype=np.intp)
        rows = np.arange(x.shape[0])
        for _ in range(self.max_depth):
            feat = self.feature[node]
            inner = feat != LEAF
            if not inner.any():
                break
            r, nd, f = rows[inner], node[inner], feat[inner]
            go_left = x[r, f] <= self.threshold[nd]
            node[inner] = np.where(go_left, self.left[nd], self.right[nd])
        return node

    def predict(self, x) -> np.ndarray:
        return self.value[self.apply(x)]

    def to_dict(self) -> dict:
        nodes = []
        for i in range(len(self.feature)):
            if self.feature[i] == LEAF:
                nodes.append({"value": float(self.value[i]), "members": [int(j) for j in self.members[i]]})
            else:
                nodes.append({
                    "column": int(self.feature[i]),
                    "threshold": float(self.threshold[i]),
                    "left": int(self.left[i]),
                    "right": int(self.right[i]),
                })
        return {
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
            "fit_rows": [int(j) for j in self.fit_rows],
            "nodes": nodes,
        }

    @classmethod
    def from_dict(cls, d) -> "ShallowTree":
        nodes = d["nodes"]
        k = len(nodes)
        feature = np.full(k, LEAF, dtype=np.intp)
        threshold = np.zeros(k)
        left = np.full(k, LEAF, dtype=np.intp)
        right = np.full(k, LEAF, dtype=np.intp)
        value = np.zeros(k)
        members = []
        for i, nd in enumerate(nodes):
            if "column" in nd:
                feature[i], threshold[i] = nd["column"], nd["threshold"]
                left[i], right[i] = nd["left"], nd["right"]
                members.append(np.empty(0, dtype=np.intp))
            else:
                value[i] = nd["value"]
                members.append(np.asarray(nd["members"], dtype=np.intp))
        return cls(feature, threshold, left, right, value, tuple(members),
                   np.asarray(d["fit_rows"], dtype=np.intp), int(d["max_depth"]), int(d["min_leaf"]))


def _best_split(x, r, min_leaf):
    """Best (gain, column, threshold) for one node, or None.

    ``r`` is already centered on the node mean, so the SSE reduction of a
    split is ``S_L^2/n_L + S_R^2/n_R`` with ``S_R = -S_L``. Gains within a
    rounding tolerance of each other count as tied, so the same partition
    reached through two columns resolves to the lower column.
    """
    n = r.shape[0]
    ss = float(r @ r)
    if ss <= 0.0:
        return None
    tol = _MIN_REL_GAIN * ss
    sizes = np.arange(1, n)
    ok_size = (sizes >= min_leaf) & (n - sizes >= min_leaf)
    if not ok_size.any():
        return None
    best = None
    best_gain = tol
    for col in range(x.shape[1]):
        order = np.argsort(x[:, col], kind="stable")
        xs = x[order, col]
        cum = np.cumsum(r[order])[:-1]
        valid = ok_size & (xs[:-1] < xs[1:])
        if not valid.any():
            continue
        gain = np.where(valid, cum * cum * n / (sizes * (n - sizes)), -np.inf)
        top = float(gain.max())
        if top > best_gain + (tol if best is not None else 0.0):
            i = int(np.flatnonzero(gain >= top - tol)[0])
            thr = 0.5 * (xs[i] + xs[i + 1])
            if not xs[i] <= thr < xs[i + 1]:
                thr = xs[i]
            best_gain, best = top, (float(gain[i]), col, float(thr))
    return best


def fit_tree(x, r, max_depth: int = 3, min_leaf: int = 5, fit_rows=None) -> ShallowTree:
    """Greedy top-down regression tree on residuals ``r``.

    Parameters
    ----------
    x : ndarray, shape (n, p)
        Predictors restricted to the fitting rows.
    r : ndarray, shape (n,)
        Residuals on the same rows.
    max_depth, min_leaf : int
        Depth cap and minimum rows per leaf.
    fit_rows : array of int, optional
        Global training indices of the ``n`` rows (defaults to ``0..n-1``);
        leaf memberships are recorded in these indices.
    """
    x = np.asarray(x, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    n = r.shape[0]
    if n == 0 or x.shape[0] != n:
        raise ValueError("fit_tree needs a non-empty x and r of matching length")
    if max_depth < 0 or min_leaf < 1:
        raise ValueError("max_depth must be >= 0 and min_leaf >= 1")
    fit_rows = np.arange(n) if fit_rows is None else np.asarray(fit_rows, dtype=np.intp)

    feature, threshold, left, right, value, members = [], [], [], [], [], []

    def new_node():
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(0.0)
        members.append(np.empty(0, dtype=np.intp))
        return len(feature) - 1

    stack = [(new_node(), np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        rn = r[idx]
        split = None
        if depth < max_depth and idx.size >= 2 * min_leaf and np.ptp(rn) > 0:
            split = _best_split(x[idx], rn - rn.mean(), min_leaf)
        if split is None:
            value[node] = float(rn.mean())
            members[node] = fit_rows[idx]
            continue
        _, col, thr = split
        go_left = x[idx, col] <= thr
        lnode, rnode = new_node(), new_node()
        feature[node], threshold[node] = col, thr
        left[node], right[node] = lnode, rnode
        # push right first so the left subtree gets the lower node ids
        stack.append((rnode, idx[~go_left], depth + 1))
        stack.append((lnode, idx[go_left], depth + 1))

    return ShallowTree(
        np.asarray(feature, dtype=np.intp), np.asarray(threshold), np.asarray(left, dtype=np.intp),
        np.asarray(right, dtype=np.intp), np.asarray(value), tuple(members), fit_rows,
        int(max_depth), int(min_leaf),
    )


def predict_tree(tree: ShallowTree, x_row) -> float:
    x_row = np.asarray(x_row, dtype=np.float64)
    return float(tree.predict(x_row[None, :])[0])


def leaf_weight_row(tree: ShallowTree, x_row, n_train: int) -> np.ndarray:
    """Averaging weights over the training rows sharing ``x_row``'s leaf.

    The dot product with the residual vector the tree was fit to equals the
    tree's prediction at ``x_row``.
    """
    leaf = tree.apply(np.asarray(x_row, dtype=np.float64)[None, :])[0]
    rows = tree.members[leaf]
    w = np.zeros(n_train)
    w[rows] = 1.0 / rows.size
    return w


def leaf_weight_matrix(tree: ShallowTree, x, n_train: int) -> np.ndarray:
    """Stack of :func:`leaf_weight_row` for every row of ``x``."""
    leaves = tree.apply(x)
    out = np.zeros((leaves.shape[0], n_train))
    for leaf in np.unique(leaves):
        rows = tree.members[leaf]
        out[np.ix_(leaves == leaf, rows)] = 1.0 / rows.size
    return out
