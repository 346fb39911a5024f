import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mvforest.tree import (Dataset, GrowConfig, LeafNode, SplitNode, best_split_exhaustive,
                           best_split_random, grow_tree, node_impurity, predict_tree)
from oracles import brute_force_best, sse

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def matrices(max_rows=30, max_cols=3):
    shape = st.tuples(st.integers(1, max_rows), st.integers(1, max_cols))
    return shape.flatmap(lambda s: arrays(np.float64, s, elements=finite))


# ---------------------------------------------------------------- impurity

def test_impurity_single_row_is_zero():
    assert node_impurity([[3.5, -2.0, 7.0]]) == 0.0


def test_impurity_two_symmetric_rows():
    assert node_impurity([[1.0, 0.0], [-1.0, 0.0]]) == 2.0


def test_impurity_univariate():
    assert node_impurity([1.0, 2.0, 3.0]) == 2.0


def test_impurity_empty_node_raises():
    with pytest.raises(ValueError):
        node_impurity(np.empty((0, 2)))


@given(matrices())
def test_impurity_matches_loop_sse(Y):
    assert node_impurity(Y) == pytest.approx(sse(Y), rel=1e-10, abs=1e-8)


@given(matrices(), st.randoms(use_true_random=False))
def test_impurity_permutation_invariant(Y, rnd):
    perm = list(range(len(Y)))
    rnd.shuffle(perm)
    assert node_impurity(Y[perm]) == pytest.approx(node_impurity(Y), rel=1e-9, abs=1e-8)


@given(matrices(max_cols=1).filter(lambda a: a.shape[1] == 1), finite)
def test_impurity_translation_invariant(Y, c):
    assert node_impurity(Y + c) == pytest.approx(node_impurity(Y), rel=1e-7, abs=1e-6)


# ---------------------------------------------------------------- exhaustive split

def test_exhaustive_separable():
    data = Dataset([[0.0], [0.0], [1.0], [1.0]], [0.0, 0.0, 10.0, 10.0])
    split = best_split_exhaustive(data, [0], min_leaf_size=1)
    assert split.feature_index == 0
    assert split.threshold == 0.5
    assert split.score == 0.0


def test_exhaustive_constant_features_give_none():
    X = np.ones((6, 3))
    X[:, 1] = 4.0
    data = Dataset(X, np.arange(6.0))
    assert best_split_exhaustive(data, [0, 1, 2]) is None


def test_exhaustive_infeasible_min_leaf_gives_none(rng):
    data = Dataset(rng.normal(size=(7, 2)), rng.normal(size=7))
    assert best_split_exhaustive(data, [0, 1], min_leaf_size=4) is None


def test_exhaustive_tie_goes_to_lowest_feature():
    # features 0 and 2 are identical, so their best splits tie exactly
    x = np.array([0.0, 1.0, 2.0, 3.0])
    data = Dataset(np.column_stack([x, -x * 0.0 + 5.0, x]), [0.0, 0.0, 1.0, 1.0])
    split = best_split_exhaustive(data, [2, 0, 1])
    assert split.feature_index == 0
    assert split.threshold == 1.5


@pytest.mark.parametrize("seed", range(25))
def test_exhaustive_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n, p, d = 20, 3, 2
    X = rng.normal(size=(n, p))
    Y = rng.normal(size=(n, d))
    split = best_split_exhaustive(Dataset(X, Y), range(p), min_leaf_size=1)
    best, winners = brute_force_best(X, Y, range(p))
    assert winners == [(split.feature_index, split.threshold)]
    assert split.score == pytest.approx(best, rel=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_exhaustive_matches_brute_force_with_ties(data):
    n = data.draw(st.integers(2, 50))
    p = data.draw(st.integers(1, 5))
    d = data.draw(st.integers(1, 3))
    min_leaf = data.draw(st.integers(1, 5))
    # small integer grids create duplicate feature values and tied scores
    X = data.draw(arrays(np.float64, (n, p), elements=st.integers(0, 6).map(float)))
    Y = data.draw(arrays(np.float64, (n, d), elements=st.integers(-3, 3).map(float)))
    feats = sorted(data.draw(st.sets(st.integers(0, p - 1), min_size=1)))
    split = best_split_exhaustive(Dataset(X, Y), feats, min_leaf_size=min_leaf)
    best, winners = brute_force_best(X, Y, feats, min_leaf)
    if best is None:
        assert split is None
        return
    assert split.score == pytest.approx(best, rel=1e-9, abs=1e-9)
    assert (split.feature_index, split.threshold) in winners


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_split_never_increases_impurity(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(25, 3))
    Y = rng.normal(size=(25, 2))
    split = best_split_exhaustive(Dataset(X, Y), [0, 1, 2], min_leaf_size=2)
    assert 0.0 <= split.score <= node_impurity(Y) + 1e-9
    mask = X[:, split.feature_index] <= split.threshold
    assert 2 <= mask.sum() <= len(X) - 2


# ---------------------------------------------------------------- random split

def test_random_constant_feature_yields_nothing(rng):
    X = np.column_stack([np.full(10, 2.0), rng.normal(size=10)])
    data = Dataset(X, rng.normal(size=10))
    assert best_split_random(data, [0], 5, rng) is None
    split = best_split_random(data, [0, 1], 5, rng)
    assert split.feature_index == 1


@pytest.mark.parametrize("seed", range(20))
def test_random_threshold_strictly_inside_range(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=8)
    data = Dataset(x.reshape(-1, 1), rng.normal(size=8))
    split = best_split_random(data, [0], 1, rng)
    assert x.min() < split.threshold < x.max()


def test_random_respects_min_leaf(rng):
    for _ in range(50):
        X = rng.normal(size=(12, 2))
        data = Dataset(X, rng.normal(size=(12, 2)))
        split = best_split_random(data, [0, 1], 1, rng, min_leaf_size=4)
        if split is not None:
            left = (X[:, split.feature_index] <= split.threshold).sum()
            assert 4 <= left <= 8


def test_random_with_many_cuts_approaches_exhaustive(rng):
    X = rng.normal(size=(15, 2))
    Y = rng.normal(size=(15, 2))
    data = Dataset(X, Y)
    exact = best_split_exhaustive(data, [0, 1])
    approx = best_split_random(data, [0, 1], 10_000, rng)
    assert approx.score == pytest.approx(exact.score, rel=1e-9)
    # the winning random cut lies in the same gap between sorted values
    x = np.sort(X[:, exact.feature_index])
    gap = np.searchsorted(x, exact.threshold)
    assert approx.feature_index == exact.feature_index
    assert x[gap - 1] < approx.threshold < x[gap]


def test_random_is_seed_reproducible():
    data = Dataset(np.random.default_rng(0).normal(size=(20, 3)),
                   np.random.default_rng(1).normal(size=20))
    a = best_split_random(data, [0, 1, 2], 2, np.random.default_rng(5))
    b = best_split_random(data, [0, 1, 2], 2, np.random.default_rng(5))
    assert a == b


# ---------------------------------------------------------------- growing

def _rows(n):
    return np.arange(n)


def test_constant_outputs_single_leaf(rng):
    data = Dataset(rng.normal(size=(40, 4)), np.full((40, 2), 3.25))
    tree = grow_tree(data, _rows(40), GrowConfig(m_try=2, min_leaf_size=1), rng)
    assert tree.n_nodes == 1
    np.testing.assert_array_equal(tree.value[0], [3.25, 3.25])


def test_min_leaf_stops_immediately(rng):
    data = Dataset(rng.normal(size=(5, 3)), rng.normal(size=5))
    tree = grow_tree(data, _rows(5), GrowConfig(m_try=3, min_leaf_size=5), rng)
    assert tree.n_nodes == 1
    assert isinstance(tree.root, LeafNode)
    assert tree.root.count == 5


def test_separable_depth_one_tree(rng):
    data = Dataset([[0.0], [0.0], [1.0], [1.0]], [0.0, 0.0, 10.0, 10.0])
    tree = grow_tree(data, _rows(4), GrowConfig(m_try=1, min_leaf_size=1), rng)
    root = tree.root
    assert isinstance(root, SplitNode)
    assert (root.feature_index, root.threshold) == (0, 0.5)
    assert root.left.mean.tolist() == [0.0] and root.right.mean.tolist() == [10.0]
    assert tree.depth() == 1
    assert predict_tree(tree, [0.0]).tolist() == [0.0]
    assert predict_tree(tree, [1.0]).tolist() == [10.0]
    # exactly at the threshold goes left
    assert predict_tree(tree, [0.5]).tolist() == [0.0]


def test_single_leaf_predicts_mean_everywhere(rng):
    data = Dataset(rng.normal(size=(6, 2)), rng.normal(size=(6, 3)))
    tree = grow_tree(data, _rows(6), GrowConfig(m_try=1, min_leaf_size=4), rng)
    mu = data.outputs.mean(axis=0)
    for x in rng.normal(size=(5, 2)) * 100:
        np.testing.assert_allclose(predict_tree(tree, x), mu, rtol=1e-15)


def test_invalid_config_rejected(rng):
    data = Dataset(rng.normal(size=(10, 2)), rng.normal(size=10))
    with pytest.raises(ValueError):
        grow_tree(data, _rows(10), GrowConfig(m_try=3), rng)
    with pytest.raises(ValueError):
        GrowConfig(m_try=1, min_leaf_size=0)
    with pytest.raises(ValueError):
        GrowConfig(m_try=1, split_mode="greedy")
    with pytest.raises(ValueError):
        grow_tree(data, [], GrowConfig(m_try=1), rng)


@pytest.mark.parametrize("mode", ["exhaustive", "random"])
def test_one_column_matrix_equals_vector_output(mode):
    rng = np.random.default_rng(3)
    X = rng.normal(size=(60, 5))
    y = rng.normal(size=60)
    cfg = GrowConfig(m_try=2, min_leaf_size=3, split_mode=mode)
    a = grow_tree(Dataset(X, y), _rows(60), cfg, np.random.default_rng(9))
    b = grow_tree(Dataset(X, y.reshape(-1, 1)), _rows(60), cfg, np.random.default_rng(9))
    for name in ("feature", "threshold", "left", "right", "count", "value"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), min_leaf=st.integers(1, 6),
       mode=st.sampled_from(["exhaustive", "random"]), bootstrap=st.booleans())
def test_leaves_hold_min_leaf_rows_and_their_mean(seed, min_leaf, mode, bootstrap):
    rng = np.random.default_rng(seed)
    n = 40
    X = rng.normal(size=(n, 4))
    Y = rng.normal(size=(n, 2))
    rows = rng.integers(0, n, n) if bootstrap else np.arange(n)
    tree = grow_tree(Dataset(X, Y), rows, GrowConfig(m_try=2, min_leaf_size=min_leaf,
                                                     split_mode=mode), rng)
    leaves = tree.apply(X[rows])
    counts = np.bincount(leaves, minlength=tree.n_nodes)
    assert np.all(counts[tree.is_leaf()] >= min_leaf)
    np.testing.assert_array_equal(counts[tree.is_leaf()], tree.count[tree.is_leaf()])
    for leaf in np.flatnonzero(tree.is_leaf()):
        np.testing.assert_allclose(tree.value[leaf], Y[rows][leaves == leaf].mean(axis=0),
                                   rtol=1e-12, atol=1e-12)


def test_unpruned_growth_isolates_distinct_points(rng):
    # with min_leaf_size=1 and all features tried, every leaf is pure
    X = rng.normal(size=(30, 2))
    Y = rng.normal(size=(30, 2))
    tree = grow_tree(Dataset(X, Y), _rows(30), GrowConfig(m_try=2, min_leaf_size=1), rng)
    np.testing.assert_allclose(predict_tree(tree, X), Y)
