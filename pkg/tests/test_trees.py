import math

import numpy as np
import pytest

from treedens.mi import MIMatrix
from treedens.trees import (
    SpanningTree,
    chain_tree,
    enumerate_spanning_trees,
    is_connected,
    is_optimal,
    max_spanning_tree,
    mi_gap,
    optimal_tree_set,
    prufer_decode,
    star_tree,
)
from treedens.truth import fgm_tree_truth, true_mi_matrix

from oracles import all_trees_by_subsets, brute_max_weight


def _random_weights(d, rng):
    w = rng.random((d, d))
    return (w + w.T) / 2


def test_three_vertex_example():
    mi = MIMatrix.from_weights(3, {(0, 1): 0.5, (0, 2): 0.3, (1, 2): 0.1})
    assert max_spanning_tree(mi).edges == ((0, 1), (0, 2))


def test_equal_weights_tie_rule():
    mi = MIMatrix.from_dense(np.ones((4, 4)))
    assert max_spanning_tree(mi).edges == ((0, 1), (0, 2), (0, 3))


def test_disconnected_rejected():
    mi = MIMatrix.from_weights(4, {(0, 1): 1.0, (2, 3): 1.0})
    with pytest.raises(ValueError):
        max_spanning_tree(mi)


def test_d5_matches_enumeration(rng):
    w = _random_weights(5, rng)
    mi = MIMatrix.from_dense(w)
    best = max(t.weight(mi) for t in enumerate_spanning_trees(5))
    assert max_spanning_tree(mi).weight(mi) == pytest.approx(best, abs=1e-12)


@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_oracle_equivalence_200(d):
    rng = np.random.default_rng(d)
    for _ in range(200):
        w = _random_weights(d, rng)
        mi = MIMatrix.from_dense(w)
        t = max_spanning_tree(mi)
        assert t.weight(mi) == pytest.approx(brute_max_weight(w, d), abs=1e-12)


@pytest.mark.parametrize("d,count", [(2, 1), (3, 3), (4, 16), (5, 125), (6, 1296), (7, 16807)])
def test_cayley_counts(d, count):
    trees = list(enumerate_spanning_trees(d))
    assert len(trees) == count
    assert len({t.edges for t in trees}) == count


@pytest.mark.parametrize("d", [3, 4, 5])
def test_enumeration_equals_subset_oracle(d):
    assert {t.edges for t in enumerate_spanning_trees(d)} == set(all_trees_by_subsets(d))


def test_enumeration_d2_and_range():
    assert [t.edges for t in enumerate_spanning_trees(2)] == [((0, 1),)]
    for d in (1, 8):
        with pytest.raises(ValueError):
            list(enumerate_spanning_trees(d))


def test_prufer_known():
    # the sequence (3, 3, 3) on 5 vertices is a star centred at 3
    assert prufer_decode([3, 3, 3], 5) == star_tree(5, 3)


@pytest.mark.parametrize("transform", [lambda w: 3.0 * w + 1.0, lambda w: 0.01 * w - 5.0, np.exp])
def test_ordering_invariance(rng, transform):
    for _ in range(50):
        d = int(rng.integers(3, 9))
        w = _random_weights(d, rng)
        if rng.random() < 0.5:
            w = np.round(w, 1)  # exercise ties
        a = max_spanning_tree(MIMatrix.from_dense(w))
        b = max_spanning_tree(MIMatrix.from_dense(transform(w)))
        assert a == b


def test_canonical_and_valid(rng):
    for _ in range(100):
        d = int(rng.integers(2, 12))
        t = max_spanning_tree(MIMatrix.from_dense(_random_weights(d, rng)))
        assert len(t.edges) == d - 1
        assert all(i < j for i, j in t.edges)
        assert list(t.edges) == sorted(t.edges)
        assert is_connected(d, t.edges)


def test_mask_respected(rng):
    for _ in range(50):
        d = 6
        w = _random_weights(d, rng)
        mask = list(chain_tree(d).edges) + [(0, 3), (2, 5), (1, 4)]
        t = max_spanning_tree(MIMatrix.from_dense(w, mask=mask))
        assert set(t.edges) <= set(mask)


def test_spanning_tree_validation():
    with pytest.raises(ValueError):
        SpanningTree(3, ((0, 1),))
    with pytest.raises(ValueError):
        SpanningTree(4, ((0, 1), (1, 2), (0, 2)))
    with pytest.raises(ValueError):
        SpanningTree(3, ((0, 1), (1, 3)))
    assert SpanningTree(3, ((2, 1), (1, 0))).edges == ((0, 1), (1, 2))


def test_text_roundtrip(tmp_path):
    t = SpanningTree(4, ((0, 3), (1, 3), (2, 3)))
    assert t.to_text() == "1 4\n2 4\n3 4\n"
    assert SpanningTree.from_text(t.to_text()) == t
    t.write(tmp_path / "t.txt")
    assert SpanningTree.from_text((tmp_path / "t.txt").read_text(), 4) == t


def test_optimal_set_full_tie():
    s = optimal_tree_set(MIMatrix.from_dense(np.ones((3, 3))))
    assert len(s) == 3


def test_optimal_set_chain_dominant():
    d = 5
    w = np.zeros((d, d))
    for k in range(d - 1):
        w[k, k + 1] = w[k + 1, k] = 1.0
    assert optimal_tree_set(MIMatrix.from_dense(w)) == {chain_tree(d)}


def test_optimal_set_contains_kruskal(rng):
    for _ in range(20):
        mi = MIMatrix.from_dense(_random_weights(5, rng))
        t = max_spanning_tree(mi)
        assert t in optimal_tree_set(mi)
        assert is_optimal(t, mi)


def test_optimal_set_range():
    with pytest.raises(ValueError):
        optimal_tree_set(MIMatrix.from_dense(np.ones((8, 8))))


def test_is_optimal_rejects_worse():
    mi = MIMatrix.from_weights(3, {(0, 1): 0.5, (0, 2): 0.3, (1, 2): 0.1})
    assert not is_optimal(SpanningTree(3, ((0, 1), (1, 2))), mi)


def test_mi_gap_examples():
    r = mi_gap(MIMatrix.from_weights(3, {(0, 1): 0.5, (0, 2): 0.3, (1, 2): 0.1}))
    assert r.delta == pytest.approx(0.2, abs=1e-15)
    assert r.tied_pairs == 0
    r = mi_gap(MIMatrix.from_weights(3, {(0, 1): 0.4, (1, 2): 0.4}))
    assert r.delta is None and r.tied_pairs == 1
    with pytest.raises(ValueError):
        mi_gap(MIMatrix.from_weights(2, {(0, 1): 0.4}))


def test_mi_gap_chain_truth_positive():
    gt = fgm_tree_truth(chain_tree(4), 0.9)
    r = mi_gap(true_mi_matrix(gt))
    assert r.delta is not None and r.delta > 0
    assert math.isfinite(r.delta)
