import numpy as np
import pytest

from neurofuse.classify import (
    GridSearchResult,
    LinearSVM,
    RandomForest,
    grid_search,
    predict_proba,
    train_linear_svm,
    train_random_forest,
)


def blobs(n_per_class, n_classes, d=6, spread=0.3, seed=0):
    rng = np.random.default_rng(seed)
    centers = 4.0 * rng.normal(size=(n_classes, d))
    y = np.repeat(np.arange(n_classes), n_per_class)
    X = centers[y] + spread * rng.normal(size=(y.size, d))
    return X, y


def test_separable_1d_toy_boundary_between_points():
    X = np.array([[-1.0], [1.0]])
    y = np.array([0, 1])
    m = train_linear_svm(X, y, C=1e6)
    assert np.array_equal(m.predict(X), y)  # 100% training accuracy
    w = m._svc.coef_.ravel()[0]
    b = m._svc.intercept_.ravel()[0]
    boundary = -b / w
    assert -1.0 < boundary < 1.0


def test_duplicating_training_rows_leaves_decision_unchanged():
    X, y = blobs(10, 3, seed=1)
    m1 = train_linear_svm(X, y, C=0.5, seed=0)
    m2 = train_linear_svm(np.vstack([X, X]), np.concatenate([y, y]), C=0.5, seed=0)
    grid = np.random.default_rng(2).normal(size=(50, X.shape[1]))
    d1 = m1.decision_values(grid)
    d2 = m2.decision_values(grid)
    np.testing.assert_allclose(d1, d2, atol=1e-6)


def test_zero_feature_leaves_decision_values_unchanged():
    X, y = blobs(8, 4, seed=3)
    m1 = train_linear_svm(X, y, C=0.1)
    m2 = train_linear_svm(np.hstack([X, np.zeros((X.shape[0], 1))]), y, C=0.1)
    grid = np.random.default_rng(4).normal(size=(30, X.shape[1]))
    grid_z = np.hstack([grid, np.ones((30, 1))])  # zero-weight feature ignored
    np.testing.assert_allclose(
        m1.decision_values(grid), m2.decision_values(grid_z), atol=1e-6
    )


def test_probabilities_live_on_the_simplex():
    X, y = blobs(6, 8, seed=5)
    for model in (train_linear_svm(X, y), train_random_forest(X, y, n_trees=20)):
        p = predict_proba(model, X)
        assert p.shape == (X.shape[0], 8)
        assert np.all(p >= 0)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


def test_argmax_proba_equals_predict_everywhere():
    X, y = blobs(6, 5, spread=2.0, seed=6)
    grid = np.random.default_rng(7).normal(size=(100, X.shape[1]))
    for model in (
        train_linear_svm(X, y),
        train_linear_svm(X, y, calibration="platt"),
        train_random_forest(X, y, n_trees=15),
    ):
        np.testing.assert_array_equal(
            model.predict(grid), np.argmax(model.predict_proba(grid), axis=1)
        )


def test_svm_confident_far_from_boundary():
    X = np.array([[-1.0], [1.0]])
    y = np.array([0, 1])
    m = train_linear_svm(X, y, C=10.0)
    p = m.predict_proba(np.array([[25.0]]))
    assert p[0, 1] > 0.5


def test_unseen_classes_get_zero_probability():
    X, y_full = blobs(8, 2, seed=8)
    y = np.where(y_full == 0, 2, 5)  # only classes 2 and 5 present
    for model in (train_linear_svm(X, y), train_random_forest(X, y, n_trees=10)):
        p = model.predict_proba(X)
        others = [c for c in range(8) if c not in (2, 5)]
        assert np.all(p[:, others] == 0)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


def test_single_class_training_rejected():
    with pytest.raises(ValueError, match="single class"):
        train_linear_svm(np.zeros((4, 2)), np.zeros(4, dtype=int))
    with pytest.raises(ValueError, match="non-finite"):
        train_linear_svm(np.array([[np.inf], [0.0]]), np.array([0, 1]))


def test_feature_dimension_mismatch_raises():
    X, y = blobs(5, 3, seed=9)
    m = train_linear_svm(X, y)
    with pytest.raises(ValueError, match="dimension mismatch"):
        m.predict(X[:, :3])


def test_single_tree_clean_clusters_give_one_hot():
    X, y = blobs(4, 3, spread=0.01, seed=10)
    m = train_random_forest(X, y, n_trees=1, seed=0)
    p = m.predict_proba(X)
    assert set(np.unique(p).tolist()) <= {0.0, 1.0}


def test_forest_is_seed_deterministic():
    X, y = blobs(10, 4, spread=3.0, seed=11)
    grid = np.random.default_rng(12).normal(size=(40, X.shape[1]))
    p1 = train_random_forest(X, y, n_trees=30, seed=5).predict_proba(grid)
    p2 = train_random_forest(X, y, n_trees=30, seed=5).predict_proba(grid)
    np.testing.assert_array_equal(p1, p2)


def test_svm_is_seed_deterministic():
    X, y = blobs(10, 4, spread=3.0, seed=13)
    m1 = train_linear_svm(X, y, C=0.2, seed=3)
    m2 = train_linear_svm(X, y, C=0.2, seed=3)
    np.testing.assert_array_equal(m1._svc.coef_, m2._svc.coef_)


# --- grid search -------------------------------------------------------------


def test_singleton_grid():
    X, y = blobs(8, 3, seed=14)
    res = grid_search(X, y, {"C": [0.1]}, k=4, seed=0)
    assert isinstance(res, GridSearchResult)
    assert res.best == {"C": 0.1}


def test_ties_prefer_smaller_c():
    X, y = blobs(8, 2, spread=0.01, seed=15)  # trivially separable: all tie at 1.0
    res = grid_search(X, y, {"C": [10.0, 0.01, 1.0]}, k=4, seed=0)
    top = max(s for _, s in res.scores)
    assert res.best["C"] == min(p["C"] for p, s in res.scores if s == top)
    assert res.best["C"] == 0.01


def test_best_c_is_smallest_argmax_under_noise():
    rng = np.random.default_rng(16)
    y = np.repeat(np.arange(2), 24)
    X = rng.normal(size=(48, 40))
    X[:, 0] += 0.8 * y  # weak signal amid noise: large C overfits
    res = grid_search(X, y, {"C": [0.01, 0.1, 1.0, 10.0]}, k=4, seed=1)
    top = max(s for _, s in res.scores)
    assert res.best["C"] == min(p["C"] for p, s in res.scores if s == top)


def test_failing_grid_points_are_recorded_and_skipped():
    X, y = blobs(8, 2, seed=17)
    res = grid_search(X, y, {"C": [0.1, -1.0]}, k=4, seed=0)
    assert res.best == {"C": 0.1}
    assert len(res.skipped) == 1
    assert res.skipped[0][0] == {"C": -1.0}


def test_empty_grid_rejected():
    with pytest.raises(ValueError, match="empty grid"):
        grid_search(np.zeros((8, 2)), np.repeat([0, 1], 4), {}, k=2)
