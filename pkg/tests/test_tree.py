import math

import numpy as np
import pytest
from scipy.stats import kstest

from bfbm.errors import DomainError
from bfbm.tree import (SAME_PATH, binary_tree, discretize, from_rows, leaves_at, name, sample_yule, segments,
                       single_branch, split_matrix, split_time, to_rows)
from utils.rng import ReplicaRNG


def test_binary_tree_layout():
    tree = binary_tree(3)
    assert tree.size == 8
    assert tree.birth.tolist() == [0.0, 1.0, 2.0, 2.0, 3.0, 3.0, 3.0, 3.0]
    assert len(segments(tree)) == 2 ** 4 - 1
    assert leaves_at(tree, 2.0).tolist() == [0, 1, 2, 3]


@pytest.mark.parametrize("T", [2.5, 0, -1, "x"])
def test_binary_tree_needs_positive_integer(T):
    with pytest.raises(DomainError):
        binary_tree(T)


def test_split_times_follow_ancestral_lines():
    tree = binary_tree(2)
    assert tree.line(3) == [0, 1, 3]
    assert split_time(tree, 0, 1) == 1.0
    assert split_time(tree, 2, 3) == 1.0
    assert split_time(tree, 0, 2) == 2.0
    assert split_time(tree, 1, 3) == 2.0
    assert split_time(tree, 2, 2) == SAME_PATH
    m = split_matrix(tree, [0, 1, 2, 3])
    np.testing.assert_array_equal(m, m.T)
    assert np.all(np.isinf(np.diag(m)))


def test_unknown_branch_rejected():
    with pytest.raises(DomainError):
        split_time(binary_tree(2), 0, 4)


def test_branch_names():
    tree = binary_tree(2)
    assert name(tree, 0) == "0"
    assert name(tree, 3) == "0 1.0 2.0"


def test_yule_is_reproducible_and_sorted():
    a = sample_yule(3.0, ReplicaRNG(4, (0,)))
    b = sample_yule(3.0, ReplicaRNG(4, (0,)))
    np.testing.assert_array_equal(a.birth, b.birth)
    np.testing.assert_array_equal(a.parent, b.parent)
    assert np.all(np.diff(a.birth) >= 0.0)
    assert np.all(a.parent[1:] < np.arange(1, a.size))
    assert a.birth[-1] <= 3.0


def test_yule_mean_size():
    T = 2.0
    sizes = np.array([sample_yule(T, ReplicaRNG(9, (r,))).size for r in range(400)])
    sd = math.exp(T) * math.sqrt(1.0 - math.exp(-T))
    assert abs(sizes.mean() - math.exp(T)) < 4.0 * sd / math.sqrt(sizes.size)


def test_discretize_keeps_grid_births():
    tree = binary_tree(3)
    left = discretize(tree, 3)
    right = discretize(tree, 3, direction="right")
    np.testing.assert_array_equal(left.birth, tree.birth)
    np.testing.assert_array_equal(right.birth, tree.birth)
    assert left.levels.tolist() == [0, 1, 2, 2, 3, 3, 3, 3]
    assert left.base_kind == "binary"


def test_discretize_shifts_and_prunes():
    rows = [(0, None, 0.0), (1, 0, 0.3), (2, 1, 1.7), (3, 0, 2.6)]
    tree = from_rows(rows, horizon=3.0)
    left = discretize(tree, 4, t=2.0)
    assert left.size == 3
    assert left.birth.tolist() == [0.0, 0.0, 1.5]
    right = discretize(tree, 4, t=2.0, direction="right")
    assert right.birth.tolist() == [0.0, 0.5, 2.0]
    assert split_time(left, 0, 1) <= split_time(tree, 0, 1) <= split_time(right, 0, 1)


def test_discretize_arguments():
    tree = binary_tree(2)
    with pytest.raises(DomainError):
        discretize(tree, 0)
    with pytest.raises(DomainError):
        discretize(tree, 2, direction="up")


def test_rows_describe_the_tree():
    tree = sample_yule(2.5, ReplicaRNG(1, (0,)))
    rows = to_rows(tree)
    assert rows[0] == (0, None, 0.0)
    rebuilt = from_rows(rows, horizon=2.5)
    np.testing.assert_array_equal(rebuilt.parent, tree.parent)
    np.testing.assert_array_equal(rebuilt.birth, tree.birth)


def test_rows_validated():
    with pytest.raises(DomainError):
        from_rows([(0, None, 0.0), (1, 2, 1.0), (2, 0, 0.5)], horizon=2.0)
    with pytest.raises(DomainError):
        from_rows([(0, None, 0.0)], horizon=2.0, kind="ternary")


def test_single_branch():
    tree = single_branch(4.0)
    assert tree.size == 1
    assert segments(tree) == [(0, 0.0, 4.0)]


def test_yule_population_is_exponential():
    T = 6.0
    scaled = np.array([sample_yule(T, ReplicaRNG(14, (r,))).size for r in range(300)]) * math.exp(-T)
    assert kstest(scaled, "expon").pvalue > 1e-2


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_split_times_are_ultrametric(seed):
    tree = sample_yule(3.0, ReplicaRNG(seed, (0,)))
    ids = list(range(min(tree.size, 64)))
    m = split_matrix(tree, ids)
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            for c in range(b + 1, len(ids)):
                low, mid, _ = sorted((m[a, b], m[a, c], m[b, c]))
                assert low == mid
