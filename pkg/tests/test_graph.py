import numpy as np
import pytest

from cagat.graph import DatasetBundle, add_self_loops, build_graph, make_splits, normalize_features, row_normalize
from cagat.synthetic import planted_partition


def test_build_graph_symmetrises_and_dedups():
    g = build_graph(4, [(0, 1), (1, 0), (2, 3), (0, 1)])
    assert g.num_edges == 2
    a = g.adjacency_matrix().toarray()
    np.testing.assert_array_equal(a, a.T)
    assert a.sum() == 4


def test_build_graph_rejects_bad_edges():
    with pytest.raises(ValueError):
        build_graph(3, [(0, 3)])
    with pytest.raises(ValueError):
        build_graph(3, [(1, 1)])


def test_self_loops_idempotent():
    g = add_self_loops(build_graph(3, [(0, 1)]))
    assert add_self_loops(g) is g
    assert np.all(g.adjacency_matrix().diagonal() == 1)
    assert g.num_edges == 1


def test_row_normalize_is_stochastic():
    g = add_self_loops(build_graph(5, [(0, 1), (1, 2), (2, 3)]))
    abar = row_normalize(g).toarray()
    np.testing.assert_allclose(abar.sum(axis=1), 1.0)


def test_isolated_node_without_loops_rejected():
    with pytest.raises(ValueError):
        row_normalize(build_graph(3, [(0, 1)]))


def test_normalize_features_rows_sum_to_one():
    x = np.array([[1.0, 3.0], [0.0, 0.0]])
    out = normalize_features(x)
    np.testing.assert_allclose(out[0], [0.25, 0.75])
    np.testing.assert_array_equal(out[1], [0, 0])


def test_permute_relabels():
    g = build_graph(3, [(0, 1)])
    p = g.permute(np.array([2, 0, 1]))
    assert p.edges.tolist() == [[0, 1]] or p.edges.tolist() == [[1, 2]]
    a, b = g.adjacency_matrix().toarray(), p.adjacency_matrix().toarray()
    perm = np.array([2, 0, 1])
    np.testing.assert_array_equal(b, a[np.ix_(perm, perm)])


def test_bundle_validation():
    g = build_graph(3, [(0, 1)])
    with pytest.raises(ValueError):
        DatasetBundle(g, np.zeros((2, 2)), np.array([0, 1, 0]), 2)
    with pytest.raises(ValueError):
        DatasetBundle(g, np.zeros((3, 2)), np.array([0, 0, 0]), 2)


def test_splits_are_disjoint_and_balanced(rng):
    b = planted_partition(nodes_per_class=50, num_classes=3)
    m = make_splits(b, 10, rng, 20)
    assert len(m.train) == 30 and len(m.val) == 60
    assert not set(m.train) & set(m.val)
    assert not (set(m.train) | set(m.val)) & set(m.test)
    assert len(m.train) + len(m.val) + len(m.test) == b.n
    assert np.all(np.bincount(b.labels[m.train]) == 10)


def test_splits_reject_small_class(rng):
    b = planted_partition(nodes_per_class=10, num_classes=2)
    with pytest.raises(ValueError):
        make_splits(b, 20, rng, 20)


def test_path_graph_normalisation():
    abar = row_normalize(add_self_loops(build_graph(3, [(0, 1), (1, 2)]))).toarray()
    np.testing.assert_allclose(abar[1], [1 / 3, 1 / 3, 1 / 3])


def test_isolated_self_looped_nodes_give_identity():
    abar = row_normalize(add_self_loops(build_graph(2, []))).toarray()
    np.testing.assert_array_equal(abar, np.eye(2))
