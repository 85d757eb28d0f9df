import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridboost import AlternatingParams, BoostModel, BoostStep, CompetitionParams, Standardizer
from hybridboost import fit_alternating, fit_competition, predict, predict_decomposed
from hybridboost.data import Dataset, rng_stream
from hybridboost.interpret import (
    ImportanceUndefined,
    channel_importance,
    permute_group,
    variable_importance,
)
from hybridboost.linear import LinearTerm
from hybridboost.tree import fit_tree

from conftest import make_data


class TestPermuteGroup:
    def test_cyclic_shift(self):
        x = np.array([[1.0, 10.0], [2.0, 20.0], [3.0, 30.0]])
        out = permute_group(x, [0], permutation=[2, 0, 1])
        np.testing.assert_array_equal(out[:, 0], [3.0, 1.0, 2.0])
        np.testing.assert_array_equal(out[:, 1], x[:, 1])

    def test_joint_rows(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(8, 3))
        out = permute_group(x, [0, 2], rng=np.random.default_rng(1))
        before = {(a, c) for a, c in x[:, [0, 2]]}
        after = {(a, c) for a, c in out[:, [0, 2]]}
        assert before == after
        np.testing.assert_array_equal(out[:, 1], x[:, 1])

    def test_identity(self):
        x = np.arange(12.0).reshape(4, 3)
        np.testing.assert_array_equal(permute_group(x, [1], permutation=np.arange(4)), x)

    def test_errors(self):
        x = np.ones((3, 2))
        with pytest.raises(ValueError):
            permute_group(x, [], permutation=[0, 1, 2])
        with pytest.raises(ValueError):
            permute_group(x, [2], permutation=[0, 1, 2])
        with pytest.raises(ValueError):
            permute_group(x, [0])


def brute_force(model, x, y, perm, cols):
    """Permuted MSEs recomputed directly from channel predictions."""
    xp = x.copy()
    xp[:, cols] = x[perm][:, cols]
    d0, dp = predict_decomposed(model, x), predict_decomposed(model, xp)
    mse = np.mean((y - predict(model, x)) ** 2)
    mse_full = np.mean((y - predict(model, xp)) ** 2)
    mse_lin = np.mean((y - (d0.base + dp.linear + d0.tree)) ** 2)
    mse_tree = np.mean((y - (d0.base + d0.linear + dp.tree)) ** 2)
    cross = 200.0 / (len(y) * mse) * np.sum((d0.linear - dp.linear) * (d0.tree - dp.tree))
    pct = lambda m: 100.0 * (m - mse) / mse  # noqa: E731
    return pct(mse_full), pct(mse_lin), pct(mse_tree), cross


class TestVariableImportance:
    def test_matches_brute_force(self):
        data = make_data(n=10, p=2, seed=3)
        model = fit_alternating(data, AlternatingParams(M=3, T=1, eta_tree=0.5, eta_lin=0.5, min_leaf=2))
        rep = variable_importance(model, data, n_repeats=1, seed=4)
        for j, name in enumerate(["x0", "x1"]):
            perm = rng_stream(4, "permute", 0, j).permutation(10)
            ref = brute_force(model, data.x, data.y, perm, [j])
            g = rep[name]
            got = (g.vi_total[0], g.vi_linear[0], g.vi_trees[0], g.cross[0])
            np.testing.assert_allclose(got, ref, rtol=1e-9, atol=1e-9)

    def test_identity_per_repeat(self):
        data = make_data(n=60, p=4, seed=1)
        model = fit_competition(data, CompetitionParams(M=60, min_leaf=5))
        rep = variable_importance(model, data, n_repeats=5, seed=2)
        for g in rep.groups:
            np.testing.assert_allclose(g.vi_total, g.vi_linear + g.vi_trees + g.cross, atol=1e-8)

    def test_unused_columns_zero(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(50, 3))
        y = 2 * x[:, 0] + 0.1 * rng.normal(size=50)
        model = fit_alternating(Dataset(x, y), AlternatingParams(M=2, T=1, max_depth=1, min_leaf=5))
        unused = set(range(3)) - model.used_columns()
        assert unused
        rep = variable_importance(model, Dataset(x, y), n_repeats=4)
        for j in unused:
            g = rep[f"x{j}"]
            for arr in (g.vi_total, g.vi_linear, g.vi_trees, g.cross):
                assert np.all(arr == 0)

    def test_trees_only(self, mixed_data):
        model = fit_alternating(mixed_data, AlternatingParams(M=5, T=2, eta_lin=0.0, min_leaf=4))
        rep = variable_importance(model, mixed_data, n_repeats=3)
        for g in rep.groups:
            assert np.all(g.vi_linear == 0) and np.all(g.cross == 0)
            np.testing.assert_array_equal(g.vi_total, g.vi_trees)

    def test_negative_cross_term(self):
        # linear step rises in x0 while the tree step falls in x0
        x = np.linspace(-1, 1, 20)[:, None]
        y = np.sin(3 * x[:, 0])
        n = x.shape[0]
        lin = LinearTerm(0, 0.0, 1.0, np.arange(n), 0.0, float(np.sum(x**2)))
        tree = fit_tree(x, -x[:, 0], max_depth=1, min_leaf=5)
        model = BoostModel("alternating", 0.0,
                           (BoostStep("tree", tree, 0.5, 0), BoostStep("linear", lin, 0.5, 1)),
                           Standardizer.identity(1), AlternatingParams(), n_train=n)
        rep = variable_importance(model, Dataset(x, y), n_repeats=10, seed=0)
        g = rep["x0"]
        assert np.all(g.cross < 0)
        np.testing.assert_allclose(g.vi_total, g.vi_linear + g.vi_trees + g.cross, atol=1e-8)

    def test_groups_and_summary(self, mixed_data):
        model = fit_competition(mixed_data, CompetitionParams(M=20, min_leaf=4))
        rep = variable_importance(model, mixed_data, groups={"a": [0, 1], "b": [2]}, n_repeats=3, seed=1)
        frame = rep.to_frame()
        assert list(frame["group"]) == ["a", "b"]
        assert (frame["n_repeats"] == 3).all()
        assert rep.mse_baseline > 0

    def test_deterministic(self, mixed_data):
        model = fit_competition(mixed_data, CompetitionParams(M=20, min_leaf=4))
        a = variable_importance(model, mixed_data, n_repeats=3, seed=9).to_frame()
        b = variable_importance(model, mixed_data, n_repeats=3, seed=9).to_frame()
        assert a.equals(b)

    def test_perfect_fit_undefined(self):
        x = np.arange(10.0)[:, None]
        model = BoostModel("alternating", 0.0, (), Standardizer.identity(1), AlternatingParams())
        with pytest.raises(ImportanceUndefined):
            variable_importance(model, Dataset(x, np.zeros(10)))

    def test_bad_repeats(self, mixed_data):
        model = fit_alternating(mixed_data, AlternatingParams(M=1, T=1))
        with pytest.raises(ValueError):
            variable_importance(model, mixed_data, n_repeats=0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 30))
def test_channel_identity_property(seed, n):
    rng = np.random.default_rng(seed)
    y, base = rng.normal(size=n), rng.normal()
    lin, tree, lp, tp = rng.normal(size=(4, n)) * rng.uniform(0.01, 10)
    total, linear, trees, cross = channel_importance(y, base, lin, tree, lp, tp)
    assert abs(total - (linear + trees + cross)) < 1e-8 * max(1.0, abs(total))
