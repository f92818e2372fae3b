import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from securedoc.graph import (GraphError, build_graph, components, is_connected, laplacian,
                             prune, ring)


def test_ring_degrees():
    g = build_graph(4, [(0, 1, 1), (1, 2, 1), (2, 3, 1), (3, 0, 1)])
    assert list(g.degree) == [2, 2, 2, 2]


def test_single_node_has_no_neighbours():
    g = build_graph(1, [])
    assert g.neighbor_sets == (frozenset(),)


def test_two_node_neighbours():
    g = build_graph(2, [(0, 1, 1.0)])
    assert set(g.neighbor_sets[0]) == {1} and set(g.neighbor_sets[1]) == {0}


@pytest.mark.parametrize("edges", [
    [(0, 4, 1.0)],             # index out of range
    [(0, 1, 0.0)],             # nonpositive weight
    [(0, 1, 1.0), (1, 0, 2.0)],  # duplicate
    [(1, 1, 1.0)],             # self loop
])
def test_bad_edges(edges):
    with pytest.raises(GraphError):
        build_graph(3, edges)


def test_laplacian_examples():
    L = laplacian(ring(4))
    assert np.array_equal(L[0], [2, -1, 0, -1])
    assert np.array_equal(L[1], [-1, 2, -1, 0])
    assert np.array_equal(laplacian(build_graph(2, [(0, 1, 1)])), [[1, -1], [-1, 1]])


def test_ring_spectrum():
    ev = np.sort(np.linalg.eigvalsh(laplacian(ring(4))))
    assert np.allclose(ev, [0, 2, 2, 4], atol=1e-9)


def test_kron_expansion():
    L = laplacian(ring(3), m=2)
    assert np.array_equal(L, np.kron(laplacian(ring(3)), np.eye(2)))


def test_connectivity():
    assert is_connected(ring(4))
    assert not is_connected(build_graph(2, []))
    assert is_connected(prune(ring(4), [3]))


def test_prune_examples():
    g = ring(4)
    p = prune(g, [3])
    assert p.n_nodes == 3 and is_connected(p)
    assert prune(g, []).weights.tolist() == g.weights.tolist()
    q = prune(g, [1, 3])
    assert q.n_nodes == 2 and not is_connected(q)
    with pytest.raises(GraphError):
        prune(g, [0, 1, 2, 3])


@st.composite
def graphs(draw):
    n = draw(st.integers(2, 7))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs)))
    ws = draw(st.lists(st.floats(0.1, 5.0), min_size=len(chosen), max_size=len(chosen)))
    return build_graph(n, [(i, j, w) for (i, j), w in zip(chosen, ws)])


@settings(max_examples=60, deadline=None)
@given(graphs())
def test_laplacian_invariants(g):
    W = g.weights
    L = laplacian(g)
    assert np.array_equal(W, W.T) and np.all(np.diag(W) == 0)
    assert np.allclose(L.sum(axis=1), 0, atol=1e-12)
    ev = np.linalg.eigvalsh(L)
    assert ev.min() > -1e-9
    # algebraic connectivity positive exactly for connected graphs
    assert (ev[1] > 1e-9) == is_connected(g)


@settings(max_examples=60, deadline=None)
@given(graphs(), st.data())
def test_prune_matches_rebuilt_subgraph(g, data):
    n = g.n_nodes
    flagged = data.draw(st.lists(st.integers(0, n - 1), unique=True, max_size=n - 1))
    keep = [k for k in range(n) if k not in flagged]
    idx = {k: i for i, k in enumerate(keep)}
    edges = [(idx[i], idx[j], w) for i, j, w in g.edges() if i in idx and j in idx]
    fresh = build_graph(len(keep), edges)
    assert np.array_equal(laplacian(prune(g, flagged)), laplacian(fresh))


def test_components():
    assert components(ring(4)) == [[0, 1, 2, 3]]
    g = build_graph(5, [(0, 1), (3, 4)])
    assert components(g) == [[0, 1], [2], [3, 4]]
