import numpy as np
import pytest

from missreg.trees import (Forest, ForestSpec, TreeNode, TreeSpec, fit_forest,
                           fit_tree, predict_forest, predict_tree,
                           predict_tree_matrix)


def sse(y):
    y = np.asarray(y, float)
    return float(y @ y) - y.sum() ** 2 / len(y) if len(y) else 0.0


def brute_force_best_decrease(X, mask, y, min_leaf):
    """Independent oracle: enumerate every (feature, threshold,
    missing-direction) candidate, including the pure missing split, and
    return the best achievable impurity decrease."""
    n, d = X.shape
    parent = sse(y)
    best = -np.inf
    for j in range(d):
        vals, miss = X[:, j], mask[:, j]
        for sentinel, _left in ((-np.inf, True), (np.inf, False)):
            z = np.where(miss, sentinel, vals)
            for thr in np.unique(z)[:-1]:
                left = z <= thr
                nl = left.sum()
                if min(nl, n - nl) < min_leaf:
                    continue
                dec = parent - sse(y[left]) - sse(y[~left])
                best = max(best, dec)
    return best


class TestFitTree:
    def test_threshold_between_classes(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(200, 3))
        y = (X[:, 0] > 0).astype(float)
        t = fit_tree(X, y, TreeSpec(max_depth=1))
        assert t.feature == 0
        lo = X[X[:, 0] > 0, 0].min()
        hi = X[X[:, 0] <= 0, 0].max()
        assert hi <= t.threshold <= lo
        assert {t.left.value, t.right.value} == {0.0, 1.0}

    def test_mia_missingness_signal(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(100, 2))
        mask = np.zeros((100, 2), bool)
        mask[:, 0] = rng.random(100) < 0.5
        y = mask[:, 0].astype(float)
        t = fit_tree(X, y, TreeSpec(max_depth=1, mia=True), mask=mask)
        assert t.feature == 0
        pred = predict_tree_matrix(t, X, mask)
        assert np.mean((pred - y) ** 2) == 0.0
        assert {t.left.value, t.right.value} == {0.0, 1.0}

    def test_constant_target_single_leaf(self):
        X = np.random.default_rng(2).normal(size=(30, 2))
        t = fit_tree(X, np.full(30, 3.3), TreeSpec())
        assert t.is_leaf

    def test_plain_tree_requires_complete(self):
        X = np.zeros((10, 2))
        mask = np.zeros((10, 2), bool)
        mask[0, 0] = True
        with pytest.raises(ValueError, match="plain trees"):
            fit_tree(X, np.zeros(10), TreeSpec(), mask=mask)

    def test_chosen_split_beats_every_candidate(self):
        rng = np.random.default_rng(3)
        for rep in range(8):
            n = 40
            X = rng.normal(size=(n, 3))
            mask = rng.random((n, 3)) < 0.3
            y = rng.normal(size=n)
            t = fit_tree(X, y, TreeSpec(max_depth=1, min_samples_leaf=5,
                                        mia=True), mask=mask)
            if t.is_leaf:
                continue
            z = np.where(mask[:, t.feature],
                         -np.inf if t.missing_left else np.inf, X[:, t.feature])
            left = z <= t.threshold
            achieved = sse(y) - sse(y[left]) - sse(y[~left])
            oracle = brute_force_best_decrease(X, mask, y, 5)
            assert achieved == pytest.approx(oracle, abs=1e-9)


class TestPredict:
    def test_leaf_only(self):
        t = TreeNode(value=4.2, n=10)
        assert predict_tree(t, [1.0, 2.0]) == 4.2

    def test_missing_goes_direction(self):
        t = TreeNode(value=0.0, n=10, feature=0, threshold=0.0,
                     missing_left=False,
                     left=TreeNode(value=-1.0, n=5),
                     right=TreeNode(value=1.0, n=5))
        assert predict_tree(t, [np.nan], m=[True]) == 1.0
        t.missing_left = True
        assert predict_tree(t, [np.nan], m=[True]) == -1.0

    def test_plain_tree_masked_cell_rejected(self):
        t = TreeNode(value=0.0, n=10, feature=0, threshold=0.0,
                     missing_left=True,
                     left=TreeNode(value=-1.0, n=5),
                     right=TreeNode(value=1.0, n=5))
        with pytest.raises(ValueError, match="masked cell"):
            predict_tree(t, [np.nan])

    def test_matches_training_partition(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(150, 4))
        mask = rng.random((150, 4)) < 0.25
        y = np.where(mask[:, 1], 2.0, 0.0) + X[:, 0]
        t = fit_tree(X, y, TreeSpec(max_depth=4, mia=True), mask=mask)
        single = np.array([predict_tree(t, X[i], mask[i]) for i in range(150)])
        assert np.array_equal(single, predict_tree_matrix(t, X, mask))

    def test_piecewise_constant_within_leaf(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(200, 2))
        y = (X[:, 0] > 0).astype(float) + (X[:, 1] > 1).astype(float)
        t = fit_tree(X, y, TreeSpec(max_depth=3))
        x = np.array([0.5, -0.5])
        base = predict_tree(t, x)
        for eps in (1e-6, 1e-4):
            assert predict_tree(t, x + eps) == base

    def test_mia_invariant_to_masked_values(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(120, 3))
        mask = rng.random((120, 3)) < 0.4
        y = X[:, 0] + mask[:, 1] * 2.0
        t = fit_tree(np.where(mask, 0.0, X), y,
                     TreeSpec(max_depth=4, mia=True), mask=mask)
        X_fuzz = X.copy()
        X_fuzz[mask] = rng.normal(size=int(mask.sum())) * 100
        t_fuzz = fit_tree(np.where(mask, 0.0, X_fuzz), y,
                          TreeSpec(max_depth=4, mia=True), mask=mask)
        p1 = predict_tree_matrix(t, X, mask)
        p2 = predict_tree_matrix(t_fuzz, X_fuzz, mask)
        assert np.array_equal(p1, p2)


class TestForest:
    def test_degenerate_forest_equals_tree(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(100, 3))
        y = X[:, 0] + rng.normal(size=100) * 0.1
        spec = ForestSpec(n_trees=1, tree=TreeSpec(max_depth=4),
                          feature_fraction=1.0, bootstrap=False, seed=0)
        f = fit_forest(X, y, spec)
        t = fit_tree(X, y, TreeSpec(max_depth=4))
        assert np.array_equal(predict_forest(f, X), predict_tree_matrix(t, X))

    def test_beats_constant_model(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(300, 4))
        y = X @ np.array([1.0, -1.0, 0.5, 0.0])
        f = fit_forest(X, y, ForestSpec(n_trees=30, tree=TreeSpec(max_depth=6),
                                        seed=1))
        mse = np.mean((predict_forest(f, X) - y) ** 2)
        assert mse < np.var(y)

    def test_seed_determinism(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(80, 3))
        y = rng.normal(size=80)
        spec = ForestSpec(n_trees=10, tree=TreeSpec(max_depth=3), seed=5)
        p1 = predict_forest(fit_forest(X, y, spec), X)
        p2 = predict_forest(fit_forest(X, y, spec), X)
        assert np.array_equal(p1, p2)

    def test_serialization_round_trip(self):
        rng = np.random.default_rng(10)
        X = rng.normal(size=(60, 3))
        y = rng.normal(size=60)
        f = fit_forest(X, y, ForestSpec(n_trees=5, tree=TreeSpec(max_depth=3),
                                        seed=2))
        f2 = Forest.from_dict(f.to_dict())
        assert np.array_equal(predict_forest(f, X), predict_forest(f2, X))

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            ForestSpec(n_trees=0)
        with pytest.raises(ValueError):
            TreeSpec(max_depth=0)
