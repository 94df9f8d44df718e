import numpy as np
import pytest

from neurofuse.features import (
    Standardizer,
    anova_f,
    anova_f_from_counts,
    class_counts_matrix,
    select_percentile,
    standardize,
)


def brute_force_anova_f(X, y):
    """Independent oracle: per-feature group sums via explicit loops."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    classes = sorted(set(y.tolist()))
    out = np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        col = X[:, j]
        grand = col.mean()
        ss_b = 0.0
        ss_w = 0.0
        for c in classes:
            grp = col[y == c]
            ss_b += grp.size * (grp.mean() - grand) ** 2
            ss_w += ((grp - grp.mean()) ** 2).sum()
        df_b = len(classes) - 1
        df_w = col.size - len(classes)
        if ss_b == 0 and ss_w == 0:
            out[j] = 0.0
        else:
            out[j] = (ss_b / df_b) / (ss_w / df_w)
    return out


def test_hand_computed_two_class_case_is_exactly_eight():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0, 0, 1, 1])
    f = anova_f(X, y)
    assert f.shape == (1,)
    assert f[0] == pytest.approx(8.0, abs=0)


def test_constant_feature_scores_zero():
    X = np.column_stack([np.full(8, 3.3), np.arange(8.0)])
    y = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    f = anova_f(X, y)
    assert f[0] == 0.0
    assert f[1] > 0


def test_matches_brute_force_on_random_instances():
    rng = np.random.default_rng(0)
    for trial in range(100):
        n_classes = int(rng.integers(2, 5))
        n_per = int(rng.integers(2, 5))
        d = int(rng.integers(1, 6))
        y = np.repeat(np.arange(n_classes), n_per)
        rng.shuffle(y)
        X = rng.normal(size=(y.size, d))
        np.testing.assert_allclose(
            anova_f(X, y), brute_force_anova_f(X, y), rtol=0, atol=1e-10
        )


def test_null_distribution_mean_near_one():
    rng = np.random.default_rng(1)
    means = []
    for seed in range(5):
        X = rng.normal(size=(160, 1000))
        y = np.repeat(np.arange(8), 20)
        rng.shuffle(y)
        means.append(anova_f(X, y).mean())
    assert abs(np.mean(means) - 1.0) < 0.15


def test_scale_invariance_of_selection():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(40, 50))
    y = np.repeat(np.arange(8), 5)
    sel_a = select_percentile(anova_f(X, y), 10).selected
    sel_b = select_percentile(anova_f(3.7 * X, y), 10).selected
    np.testing.assert_array_equal(sel_a, sel_b)


def test_single_class_rejected():
    with pytest.raises(ValueError, match="2 classes"):
        anova_f(np.zeros((4, 2)), np.zeros(4, dtype=int))


def test_class_below_two_members_rejected():
    with pytest.raises(ValueError, match="at least 2 members"):
        anova_f(np.zeros((3, 2)), np.array([0, 0, 1]))


def test_counts_form_equals_materialized_multiset():
    rng = np.random.default_rng(3)
    base = rng.normal(size=(10, 7))
    idx = rng.integers(0, 10, size=60)
    y = rng.integers(0, 3, size=60)
    # guarantee >= 2 per class
    y[:6] = [0, 0, 1, 1, 2, 2]
    _, counts = class_counts_matrix(y, 10, idx)
    np.testing.assert_allclose(
        anova_f_from_counts(base, counts),
        brute_force_anova_f(base[idx], y),
        atol=1e-10,
    )


# --- percentile selection ---------------------------------------------------


def test_percentile_count_for_paper_scale():
    scores = np.arange(216713, dtype=float)
    sel = select_percentile(scores, 1.0)
    assert sel.selected.size == 2168  # ceil(0.01 * 216713)


def test_percentile_full_keeps_everything():
    sel = select_percentile(np.arange(10.0), 100.0)
    assert sel.selected.size == 10


def test_percentile_minimum_one():
    sel = select_percentile(np.arange(5.0), 1.0)
    assert sel.selected.size == 1
    assert sel.selected[0] == 4  # highest score


def test_percentile_ties_prefer_lower_index():
    scores = np.array([1.0, 2.0, 2.0, 2.0, 0.0])
    sel = select_percentile(scores, 40.0)  # keep 2 of 5
    np.testing.assert_array_equal(sel.selected, [1, 2])


def test_percentile_validates_range():
    for bad in (0.0, -1.0, 101.0):
        with pytest.raises(ValueError):
            select_percentile(np.arange(4.0), bad)


def test_planted_features_recovered_exactly():
    rng = np.random.default_rng(4)
    n, d = 80, 200
    y = np.repeat(np.arange(8), 10)
    X = rng.normal(size=(n, d))
    planted = rng.choice(d, size=10, replace=False)
    for j, c_shift in zip(planted, range(10)):
        X[:, j] += 4.0 * (y == (c_shift % 8))
    sel = select_percentile(anova_f(X, y), 5.0)  # keep exactly 10
    np.testing.assert_array_equal(sel.selected, np.sort(planted))


# --- standardization ---------------------------------------------------------


def test_standardize_train_on_itself_is_unit():
    rng = np.random.default_rng(5)
    X = rng.normal(3.0, 2.0, size=(50, 6))
    Z = standardize(X, X)
    np.testing.assert_allclose(Z.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(Z.std(axis=0), 1.0, atol=1e-10)


def test_constant_columns_map_to_zero():
    X = np.ones((10, 3))
    Z = standardize(X, X + 5.0)
    assert np.all(Z == 0.0)


def test_no_leakage_of_test_statistics():
    rng = np.random.default_rng(6)
    train = rng.normal(0.0, 1.0, size=(40, 4))
    test = rng.normal(5.0, 3.0, size=(40, 4))
    with_train_stats = standardize(train, test)
    with_own_stats = standardize(test, test)
    assert not np.allclose(with_train_stats, with_own_stats)
    # train statistics really are the fitted ones
    s = Standardizer.fit(train)
    np.testing.assert_allclose(s.mean, train.mean(axis=0))
