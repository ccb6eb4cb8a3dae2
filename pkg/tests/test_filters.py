import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from sklearn.base import clone

from survsel.exceptions import DegenerateLabelsError, NotNormalizedError
from survsel.filters import (PERFECT_SEPARATION_F, FeatureSelection, FilterSelector,
                             anova_score, average_over_horizons, rank_features, ranking_order,
                             relieff_score, select_features, svm_score, time_fixed_labels)


def test_time_fixed_label_examples():
    y = (np.array([5.0, 5.0, 12.0, 3.0, 20.0]), np.array([1, 2, 1, 0, 1]))
    np.testing.assert_array_equal(time_fixed_labels(y, 1, 12).labels, [1, 0, 0, 0, 0])
    np.testing.assert_array_equal(time_fixed_labels(y, 2, 12).labels, [0, 1, 0, 0, 0])
    np.testing.assert_array_equal(time_fixed_labels(y, 1, 25).labels, [1, 0, 1, 0, 1])
    assert time_fixed_labels(y, 2, 4).degenerate
    with pytest.raises(ValueError):
        time_fixed_labels(y, 1, 0)


def brute_anova(x, labels):
    return stats.f_oneway(x[labels == 0], x[labels == 1])


def test_anova_matches_scipy():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(80, 6))
    labels = (rng.random(80) < 0.3).astype(int)
    X[labels == 1, 2] += 1.5
    F, p = anova_score(X, labels)
    for j in range(6):
        ref = brute_anova(X[:, j], labels)
        assert F[j] == pytest.approx(ref.statistic, rel=1e-10)
        assert p[j] == pytest.approx(ref.pvalue, rel=1e-8)
    assert np.argmax(F) == 2


def test_anova_degenerate_columns():
    labels = np.array([0, 0, 1, 1])
    X = np.array([[1.0, 7.0], [1.0, 7.0], [2.0, 7.0], [2.0, 7.0]])
    F, p = anova_score(X, labels)
    assert F[0] == PERFECT_SEPARATION_F and p[0] == 0.0
    assert F[1] == 0.0 and p[1] == 1.0
    with pytest.raises(DegenerateLabelsError):
        anova_score(X, np.zeros(4))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 10), st.floats(-5, 5))
def test_anova_invariant_to_affine_rescaling(seed, scale, shift):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 2))
    labels = np.r_[np.zeros(15, int), np.ones(15, int)]
    F1, _ = anova_score(X, labels)
    F2, _ = anova_score(X * scale + shift, labels)
    np.testing.assert_allclose(F1, F2, rtol=1e-7)


def test_svm_ranks_the_separating_feature_first():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(400, 5))
    labels = (X[:, 3] + 0.3 * rng.normal(size=400) > 0.5).astype(int)
    X = (X - X.mean(0)) / X.std(0)
    w = svm_score(X, labels, epochs=30, seed=0)
    assert np.argmax(w) == 3
    np.testing.assert_array_equal(w, svm_score(X, labels, epochs=30, seed=0))
    assert np.all(w >= 0)


def test_svm_requires_standardized_input():
    X = np.random.default_rng(0).normal(5.0, 3.0, size=(50, 2))
    with pytest.raises(NotNormalizedError):
        svm_score(X, np.r_[np.zeros(25), np.ones(25)])


def relieff_oracle(X, labels, k):
    """Naive ReliefF over every record, neighbours sorted by (distance, index)."""
    n, p = X.shape
    span = X.max(0) - X.min(0)
    span[span == 0] = np.inf
    w = np.zeros(p)
    for i in range(n):
        dist = [(np.sqrt(((X[i] - X[j]) ** 2).sum()), j) for j in range(n) if j != i]
        dist.sort()
        hits = [j for _, j in dist if labels[j] == labels[i]][:k]
        misses = [j for _, j in dist if labels[j] != labels[i]][:k]
        for j in hits:
            w -= np.abs(X[i] - X[j]) / span / (n * k)
        for j in misses:
            w += np.abs(X[i] - X[j]) / span / (n * k)
    return w


@pytest.mark.parametrize("seed", range(3))
def test_relieff_matches_naive_oracle(seed):
    rng = np.random.default_rng(seed)
    X = np.hstack([rng.normal(size=(40, 3)), rng.integers(0, 2, size=(40, 2))])
    labels = (X[:, 0] + rng.normal(size=40) > 0).astype(int)
    ours = relieff_score(X, labels, k_neighbors=3, sample_count=40, seed=seed)
    np.testing.assert_allclose(ours, relieff_oracle(X, labels, 3), atol=1e-12)


def test_relieff_ties_break_to_lower_index():
    # every record is equidistant from all others of the opposite class
    X = np.array([[0.0], [0.0], [0.0], [1.0], [1.0], [1.0]])
    labels = np.array([0, 0, 1, 0, 1, 1])
    ours = relieff_score(X, labels, k_neighbors=1, sample_count=6, seed=0)
    np.testing.assert_allclose(ours, relieff_oracle(X, labels, 1), atol=1e-12)


def test_relieff_reduces_k_with_warning():
    X = np.arange(8.0)[:, None]
    labels = np.array([0, 0, 0, 0, 0, 0, 1, 1])
    with pytest.warns(UserWarning, match="fewer than 5"):
        relieff_score(X, labels, k_neighbors=5)


def test_average_over_horizons_excludes_degenerate():
    scores = np.array([[1.0, 2.0], [0.0, 0.0], [3.0, 6.0]])
    with pytest.warns(UserWarning, match="1 degenerate"):
        avg = average_over_horizons(scores, [False, True, False])
    np.testing.assert_allclose(avg, [2.0, 4.0])
    with pytest.raises(DegenerateLabelsError):
        average_over_horizons(scores, [True, True, True])


def test_ranking_order_ties_to_lower_index():
    np.testing.assert_array_equal(ranking_order([1.0, 3.0, 1.0, 3.0]), [1, 3, 0, 2])


def test_select_features_examples():
    sel = select_features([np.array([0.1, 0.5, 0.2])], 3)
    np.testing.assert_array_equal(sel.per_event[0], [0, 1, 2])
    np.testing.assert_array_equal(sel.shared, [0, 1, 2])

    with pytest.warns(UserWarning, match="shared"):
        sel = select_features([np.array([3.0, 2.0, 0.0, 0.0]), np.array([0.0, 0.0, 2.0, 3.0])],
                              [2, 2])
    assert sel.shared_absent
    np.testing.assert_array_equal(sel.per_event[1], [2, 3])

    sel = select_features([np.array([3.0, 2.0, 1.0]), np.array([1.0, 3.0, 2.0])], [2, 1])
    np.testing.assert_array_equal(sel.shared, [1])
    assert sel.n_selected == (2, 1)
    assert FeatureSelection.from_dict(sel.to_dict()).n_selected == (2, 1)
    with pytest.raises(ValueError):
        select_features([np.zeros(3)], 4)


def test_rank_features_per_event(toy_normalized):
    d = toy_normalized
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rankings = rank_features(d.X, d.y, "anova", num_events=2,
                                 feature_names=d.feature_names)
    assert [r.event for r in rankings] == [1, 2]
    r1 = rankings[0]
    assert r1.per_horizon.shape == (4, d.n_features)
    frame = r1.to_frame()
    assert list(frame["rank"]) == list(range(1, d.n_features + 1))
    assert frame["averaged_score"].is_monotonic_decreasing
    assert {"score_12", "score_120", "p_value"} <= set(frame.columns)


def test_filter_selector_is_a_sklearn_selector(toy_normalized, toy):
    d = toy_normalized
    _, truth = toy
    sel = FilterSelector(method="anova", n_select=5, num_events=2)
    assert clone(sel).get_params() == sel.get_params()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        Xt = sel.fit(d.X, d.y).transform(d.X)
    support = sel.get_support(indices=True)
    np.testing.assert_array_equal(support, sel.selection_.union())
    assert Xt.shape == (d.n_records, support.size)
    assert set(truth.relevant) <= set(sel.selection_.per_event[0])


def test_anova_matches_mean_square_formula():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(50, 3))
    labels = np.r_[np.zeros(20, int), np.ones(30, int)]
    F, _ = anova_score(X, labels)
    for j in range(3):
        x = X[:, j]
        groups = [x[labels == 0], x[labels == 1]]
        between = sum(g.size * (g.mean() - x.mean()) ** 2 for g in groups) / 1
        within = sum(((g - g.mean()) ** 2).sum() for g in groups) / (50 - 2)
        assert abs(F[j] - between / within) / (between / within) < 1e-10


def test_svm_two_feature_separable_instance():
    rng = np.random.default_rng(3)
    x1 = np.r_[rng.uniform(-2, -0.5, 50), rng.uniform(0.5, 2, 50)]
    x2 = rng.normal(size=100)
    X = np.column_stack([x1, x2])
    X = (X - X.mean(0)) / X.std(0)
    w = svm_score(X, np.r_[np.zeros(50, int), np.ones(50, int)], epochs=20)
    assert w[0] > w[1]
    with pytest.raises(DegenerateLabelsError):
        svm_score(X, np.zeros(100, int))


def test_relieff_finds_an_interaction_and_ignores_constants():
    rng = np.random.default_rng(8)
    a, b = rng.integers(0, 2, (2, 200))
    noise = rng.uniform(0, 1, 200)
    X = np.column_stack([a, b, noise, np.full(200, 3.0)]).astype(float)
    w = relieff_score(X, a ^ b, k_neighbors=10)
    assert min(w[0], w[1]) > w[2]
    assert w[3] == 0.0


def test_relieff_twenty_record_oracle():
    rng = np.random.default_rng(21)
    X = rng.normal(size=(20, 4))
    labels = (X[:, 1] > 0).astype(int)
    ours = relieff_score(X, labels, k_neighbors=3, sample_count=20)
    ref = relieff_oracle(X, labels, 3)
    np.testing.assert_allclose(ours, ref, rtol=1e-9)
