"""Acceptance criteria, one test per criterion at the stated tolerance.

Each test records a PASS/FAIL line that is printed in the terminal summary
(and immediately with ``pytest -s``). Run just this file with::

    pytest tests/test_acceptance.py -v
"""

import json
import os

import numpy as np
import pandas as pd
import pytest

import hybridboost.booster as booster
from hybridboost import AlternatingParams, CompetitionParams, predict, predict_decomposed
from hybridboost.booster import calibration_scale, dumps
from hybridboost.cli import main
from hybridboost.data import Dataset, draw_subsample
from hybridboost.dual import test_weights as query_weights
from hybridboost.dual import train_weight_state
from hybridboost.interpret import variable_importance
from hybridboost.linear import fit_linear
from hybridboost.simulate import DgpSpec, run_bench
from hybridboost.tree import fit_tree

from conftest import ACCEPTANCE, make_data
from oracles import greedy_tree, normal_equations, optimal_sse, tree_to_nested
from test_linear import orthogonal_design, stagewise


def verdict(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  criterion {name}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    assert ok, line


def random_dataset(rng, n=None, p=None):
    n = int(rng.integers(30, 150)) if n is None else n
    p = int(rng.integers(1, 6)) if p is None else p
    kind = ("mixed", "linear", "noise")[int(rng.integers(3))] if p >= 2 else "linear"
    return make_data(n=n, p=p, seed=int(rng.integers(1 << 30)), kind=kind)


def random_competition(rng):
    judge = ("oob", "training")[int(rng.integers(2))]
    return CompetitionParams(M=int(rng.integers(1, 60)), eta=float(rng.uniform(0.02, 0.5)),
                             q=float(rng.uniform(0.5, 0.95)) if judge == "oob" else float(rng.uniform(0.5, 1.0)),
                             rho=float(rng.uniform(0.2, 1.0)), max_depth=int(rng.integers(1, 5)),
                             min_leaf=int(rng.integers(1, 15)), judge=judge, calibrate=bool(rng.integers(2)))


def random_alternating(rng, eta_lin=None):
    return AlternatingParams(M=int(rng.integers(1, 8)), T=int(rng.integers(1, 6)),
                             eta_tree=float(rng.uniform(0.02, 1.0)),
                             eta_lin=float(rng.uniform(0, 1.0)) if eta_lin is None else eta_lin,
                             max_depth=int(rng.integers(1, 5)), min_leaf=int(rng.integers(1, 15)))


# -- 1: published benchmark cells ---------------------------------------------

@pytest.fixture(scope="module")
def bench():
    grid = [DgpSpec("linear", 1.0, 250), DgpSpec("mixture", 0.5, 250), DgpSpec("trig_log", 2.0, 1000)]
    return run_bench(grid, methods=("ols", "lgb_plus", "lgb_alt"), seed=0)


def test_1a_linear_cell(bench):
    ols = bench.mean("linear", 1.0, 250, "ols")
    alt = bench.mean("linear", 1.0, 250, "lgb_alt")
    ok = abs(ols - 0.49) <= 0.03 and abs(alt - 0.45) <= 0.08
    verdict("1a", ok, f"linear N=250 SNR=1: OLS R2 {ols:.3f} (0.49 +/- 0.03), alternating {alt:.3f} "
                      f"(0.45 +/- 0.08)")


def test_1b_mixture_cell(bench):
    ols = bench.mean("mixture", 0.5, 250, "ols")
    plus = bench.mean("mixture", 0.5, 250, "lgb_plus")
    alt = bench.mean("mixture", 0.5, 250, "lgb_alt")
    verdict("1b", plus >= ols and alt >= ols,
            f"mixture N=250 SNR=0.5: competition {plus:.3f}, alternating {alt:.3f}, both >= OLS {ols:.3f}")


def test_1c_trig_log_cell(bench):
    ols = bench.mean("trig_log", 2.0, 1000, "ols")
    plus = bench.mean("trig_log", 2.0, 1000, "lgb_plus")
    alt = bench.mean("trig_log", 2.0, 1000, "lgb_alt")
    verdict("1c", min(plus, alt) - ols >= 0.30,
            f"trig_log N=1000 SNR=2: competition {plus:.3f}, alternating {alt:.3f}, OLS {ols:.3f} "
            f"(margin >= 0.30)")


# -- 2-5: exact identities ------------------------------------------------------

def test_2_decomposition_identity():
    rng = np.random.default_rng(2002)
    worst = 0.0
    for i in range(50):
        data = random_dataset(rng)
        variant = ("competition", "alternating")[i % 2]
        hyper = random_competition(rng) if variant == "competition" else random_alternating(rng)
        model = booster.fit(data, variant, hyper, seed=i)
        q = rng.normal(size=(1000, data.p)) * 2
        worst = max(worst, float(np.max(np.abs(predict_decomposed(model, q).total - predict(model, q)))))
    verdict("2", worst < 1e-10, f"50 random models x 1000 rows, max |base+linear+tree - predict| = {worst:.2e}")


def test_3_importance_identity():
    rng = np.random.default_rng(3003)
    worst = 0.0
    for i in range(20):
        data = random_dataset(rng, p=int(rng.integers(2, 6)))
        if i % 2:
            model = booster.fit_competition(data, random_competition(rng), seed=i)
        else:
            model = booster.fit_alternating(data, random_alternating(rng))
        rep = variable_importance(model, data, n_repeats=5, seed=i)
        for g in rep.groups:
            worst = max(worst, float(np.max(np.abs(g.vi_total - (g.vi_linear + g.vi_trees + g.cross)))))
    verdict("3", worst < 1e-8, f"20 random models, per repeat and group, max identity gap = {worst:.2e}")


def test_4_dual_weight_identity():
    rng = np.random.default_rng(4004)
    worst, lin_zero = 0.0, True
    for i in range(20):
        data = random_dataset(rng, n=int(rng.integers(10, 201)))
        eta_lin = 0.0 if i % 4 == 0 else None
        model = booster.fit_alternating(data, random_alternating(rng, eta_lin))
        q = rng.normal(size=(50, data.p)) * 2
        state = train_weight_state(model, data)
        attr = query_weights(model, data, q)
        worst = max(worst, float(np.max(np.abs(state.forecast(data.y) - predict(model, data.x)))),
                    float(np.max(np.abs(attr.forecast(data.y) - predict(model, q)))))
        if eta_lin == 0.0:
            lin_zero &= bool(np.all(state.w_linear == 0) and np.all(attr.w_linear == 0))
    verdict("4", worst < 1e-8 and lin_zero,
            f"20 random alternating models (N <= 200): max |w.y - predict| = {worst:.2e}; "
            f"w_linear == 0 when eta_lin = 0: {lin_zero}")


def test_5_reduction_equivalence(monkeypatch):
    data = make_data(n=80, p=4, seed=5)
    # alternating with the linear channel off against a plain tree booster
    alt = booster.fit_alternating(data, AlternatingParams(M=6, T=4, eta_tree=0.15, eta_lin=0.0, min_leaf=4))
    st = alt.standardizer
    z, y = st.transform_x(data.x), st.transform_y(data.y)
    f = np.full(data.n, y.mean())
    for _ in range(24):
        f = f + 0.15 * fit_tree(z, y - f, 3, 4).predict(z)
    alt_equal = np.array_equal(predict(alt, data.x), st.inverse_y(f))

    # competition with every linear candidate degenerate against subsampled tree boosting
    monkeypatch.setattr(booster, "select_feature", lambda *a, **k: None)
    hyper = CompetitionParams(M=30, eta=0.1, q=0.75, min_leaf=4, calibrate=False)
    comp = booster.fit_competition(data, hyper, seed=8)
    f = np.full(data.n, y.mean())
    for t in range(30):
        rows = draw_subsample(data.n, 0.75, 8, t).in_bag
        f = f + 0.1 * fit_tree(z[rows], y[rows] - f[rows], 3, 4, fit_rows=rows).predict(z)
    comp_equal = np.array_equal(predict(comp, data.x), comp.standardizer.inverse_y(f))
    verdict("5", alt_equal and comp_equal,
            f"bitwise equal to plain tree boosting: alternating eta_lin=0 {alt_equal}, "
            f"competition forced fallback {comp_equal}")


# -- 6-8: oracles and properties -----------------------------------------------

def test_6_tiny_scale_oracles():
    rng = np.random.default_rng(6006)
    tree_ok = True
    for _ in range(60):
        n, p = int(rng.integers(2, 9)), int(rng.integers(1, 3))
        x = np.round(rng.uniform(size=(n, p)), 1)
        r = rng.normal(size=n)
        depth, min_leaf = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        tree = fit_tree(x, r, depth, min_leaf)
        got = tree_to_nested(tree)
        want = greedy_tree(x, r, depth, min_leaf)
        sse = float(np.sum((r - tree.predict(x)) ** 2))
        tree_ok &= _same_tree(got, want)
        if depth == 1:
            tree_ok &= abs(sse - optimal_sse(x, r, 1, min_leaf)) < 1e-9
    x, r = np.array([1.0, 2.0, 4.0, 7.0]), np.array([0.3, -1.1, 2.0, 0.5])
    ref = normal_equations(np.column_stack([np.ones(4), x]), r)
    term = fit_linear(x, r)
    lin_gap = max(abs(term.alpha - ref[0]), abs(term.beta - ref[1]))
    y, yhat = rng.normal(size=10), rng.normal(size=10)
    (beta,) = normal_equations(yhat[:, None], y)
    cal_gap = abs(calibration_scale(y, yhat) - beta)
    verdict("6", tree_ok and lin_gap < 1e-12 and cal_gap < 1e-12,
            f"trees match exhaustive enumeration: {tree_ok}; linear gap {lin_gap:.1e}; calibration gap {cal_gap:.1e}")


def _same_tree(a, b):
    if a[0] == "leaf" or b[0] == "leaf":
        return a[0] == b[0] and abs(a[1] - b[1]) < 1e-12
    return a[0] == b[0] and abs(a[1] - b[1]) < 1e-12 and _same_tree(a[2], b[2]) and _same_tree(a[3], b[3])


def test_7_judge_integrity():
    rng = np.random.default_rng(7007)
    bad, steps = 0, 0
    for i in range(20):
        data = random_dataset(rng, p=int(rng.integers(2, 6)))
        hyper = random_competition(rng)
        for s in booster.fit_competition(data, hyper, seed=i).steps:
            steps += 1
            lt, ll = s.judge["loss_tree"], s.judge["loss_lin"]
            if ll is None:
                bad += s.kind != "tree"
                continue
            kept, rejected = (lt, ll) if s.kind == "tree" else (ll, lt)
            bad += not (kept <= rejected and (s.kind == "tree" or lt > ll))
    verdict("7", bad == 0, f"20 random competition fits, {steps} judged steps, {bad} violations")


def test_8_stagewise_shrinkage():
    x = orthogonal_design()
    y = x @ np.array([1.0, -0.5, 0.25]) + 0.1 * np.random.default_rng(1).normal(size=x.shape[0])
    ols = normal_equations(np.column_stack([np.ones(len(y)), x]), y)[1:]
    path, _, _ = stagewise(x, y, eta=0.05, steps=400)
    gap = float(np.max(np.abs(path[-1] - ols)))
    xs = orthogonal_design(n=200, seed=2)
    rng = np.random.default_rng(3)
    _, b_signal, _ = stagewise(xs, xs @ np.array([1.0, -0.5, 0.25]) + 0.5 * rng.normal(size=200), 0.05, 200)
    _, b_noise, _ = stagewise(xs, rng.normal(size=200), 0.05, 200)
    ratio = b_signal.mean() / b_noise.mean()
    verdict("8", gap < 1e-2 and ratio >= 5,
            f"converged to OLS within {gap:.1e} (< 1e-2); signal/noise mean |beta| ratio {ratio:.1f} (>= 5)")


# -- 9: CLI determinism ---------------------------------------------------------

def _cli_round(folder):
    os.makedirs(folder)
    cwd = os.getcwd()
    os.chdir(folder)
    try:
        data = make_data(n=40, p=3, seed=0)
        frame = pd.DataFrame(data.x, columns=["a", "b", "c"])
        frame["y"] = data.y
        frame["bench"] = frame["y"].shift(1).fillna(0.0)
        frame.to_csv("d.csv", index=False)
        frame.drop(columns=["bench"]).to_csv("train.csv", index=False)
        open("groups.txt", "w").write("ab: a, b\nc: c\n")
        commands = [
            ["fit", "--data", "train.csv", "--target", "y", "--model", "plus.json", "--M", "40", "--ensemble", "2"],
            ["fit", "--data", "train.csv", "--target", "y", "--model", "alt.json", "--variant", "alt",
             "--M", "4", "--T", "2", "--min-leaf", "4"],
            ["predict", "--model", "plus.json", "--data", "train.csv", "--out", "pred.csv", "--decompose"],
            ["explain", "--model", "plus.json", "--data", "train.csv", "--target", "y", "--out", "vi.csv",
             "--groups", "groups.txt", "--repeats", "5", "--seed", "4"],
            ["weights", "--model", "alt.json", "--data", "train.csv", "--target", "y", "--out", "w.csv",
             "--window", "4", "--smooth", "4"],
            ["simulate", "--out", "sim.csv", "--dgps", "linear,mixture", "--snrs", "1", "--sizes", "60",
             "--reps", "2", "--n-test", "50", "--M", "10"],
            ["evaluate", "--data", "d.csv", "--target", "y", "--out", "ev.csv", "--first-train-end", "19",
             "--refit-every", "10", "--benchmark-col", "bench", "--M", "3", "--T", "2"],
        ]
        codes = [main(c) for c in commands]
        files = {name: open(name, "rb").read() for name in sorted(os.listdir("."))}
    finally:
        os.chdir(cwd)
    return codes, files


def test_9_cli_determinism(tmp_path):
    codes_a, files_a = _cli_round(tmp_path / "a")
    codes_b, files_b = _cli_round(tmp_path / "b")
    outputs = [f for f in files_a if f not in ("d.csv", "train.csv", "groups.txt")]
    same = files_a == files_b
    manifests = [json.loads(files_a[f]) for f in outputs if f.endswith(".manifest.json")]
    ok = codes_a == codes_b == [0] * 7 and same and len(manifests) == 7
    verdict("9", ok, f"7 commands rerun, {len(outputs)} output files byte-identical: {same}")
