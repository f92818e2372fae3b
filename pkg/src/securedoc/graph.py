"""Weighted undirected communication graphs.

Nodes are indexed ``0..n-1``.  A :class:`Graph` keeps a dense symmetric
weight matrix; neighbour sets and degrees are derived from it.  Pruning
keeps the original node labels so that a subgraph can be mapped back to
the full network.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class GraphError(ValueError):
    """Raised for malformed graph descriptions."""


@dataclass(frozen=True)
class Graph:
    """Weighted undirected graph.

    Attributes
    ----------
    weights : ndarray, shape (n, n)
        Symmetric nonnegative weights with zero diagonal.
    labels : tuple of int
        Original node identifiers (identity for freshly built graphs).
    """

    weights: np.ndarray
    labels: tuple = field(default=())

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise GraphError("weight matrix must be square")
        if not np.array_equal(w, w.T):
            raise GraphError("weight matrix must be symmetric")
        if np.any(np.diag(w) != 0.0):
            raise GraphError("self-loops are not allowed")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise GraphError("weights must be finite and nonnegative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        labels = tuple(self.labels) if self.labels else tuple(range(w.shape[0]))
        if len(labels) != w.shape[0]:
            raise GraphError("one label per node required")
        object.__setattr__(self, "labels", labels)

    @property
    def n_nodes(self) -> int:
        return self.weights.shape[0]

    @property
    def neighbor_sets(self) -> tuple:
        return tuple(frozenset(np.flatnonzero(row > 0).tolist()) for row in self.weights)

    @property
    def degree(self) -> np.ndarray:
        """Weighted degree ``w_N_j = sum_i w_ji`` of every node."""
        return self.weights.sum(axis=1)

    def edges(self) -> list:
        """Edge list ``(i, j, w)`` with ``i < j``."""
        i, j = np.nonzero(np.triu(self.weights))
        return [(int(a), int(b), float(self.weights[a, b])) for a, b in zip(i, j)]


def build_graph(n: int, edges: Iterable[Sequence]) -> Graph:
    """Build a graph from an edge list of ``(i, j, weight)`` triples.

    Parameters
    ----------
    n : int
        Number of nodes.
    edges : iterable
        Triples ``(i, j, w)``; a pair ``(i, j)`` defaults to weight 1.

    Raises
    ------
    GraphError
        On out-of-range indices, self-loops, nonpositive weights or
        duplicate edges.
    """
    if n < 1:
        raise GraphError("graph needs at least one node")
    w = np.zeros((n, n))
    for e in edges:
        if len(e) == 2:
            i, j, wt = e[0], e[1], 1.0
        elif len(e) == 3:
            i, j, wt = e
        else:
            raise GraphError(f"edge {e!r} is not (i, j[, w])")
        i, j, wt = int(i), int(j), float(wt)
        if not (0 <= i < n and 0 <= j < n):
            raise GraphError(f"edge ({i}, {j}) has an index out of range")
        if i == j:
            raise GraphError(f"self-loop at node {i}")
        if not wt > 0 or not np.isfinite(wt):
            raise GraphError(f"edge ({i}, {j}) has nonpositive weight {wt}")
        if w[i, j] != 0:
            raise GraphError(f"duplicate edge ({i}, {j})")
        w[i, j] = w[j, i] = wt
    return Graph(w)


def ring(n: int, weight: float = 1.0) -> Graph:
    """Cycle graph ``0-1-...-(n-1)-0`` with uniform weights."""
    if n < 3:
        raise GraphError("a ring needs at least 3 nodes")
    return build_graph(n, [(k, (k + 1) % n, weight) for k in range(n)])


def laplacian(g: Graph, m: int = 1) -> np.ndarray:
    """Graph Laplacian ``D - W``, optionally expanded to ``L kron I_m``."""
    L = np.diag(g.degree) - g.weights
    if m == 1:
        return L
    return np.kron(L, np.eye(m))


def is_connected(g: Graph) -> bool:
    """Breadth-first connectivity test."""
    n = g.n_nodes
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    nbrs = g.neighbor_sets
    while queue:
        k = queue.popleft()
        for i in nbrs[k]:
            if not seen[i]:
                seen[i] = True
                queue.append(i)
    return bool(seen.all())


def components(g: Graph) -> list:
    """Connected components as sorted lists of node indices."""
    n = g.n_nodes
    seen = np.zeros(n, dtype=bool)
    nbrs = g.neighbor_sets
    out = []
    for s in range(n):
        if seen[s]:
            continue
        seen[s] = True
        comp, queue = [s], deque([s])
        while queue:
            k = queue.popleft()
            for i in nbrs[k]:
                if not seen[i]:
                    seen[i] = True
                    comp.append(i)
                    queue.append(i)
        out.append(sorted(comp))
    return out


def prune(g: Graph, flagged: Iterable[int]) -> Graph:
    """Remove flagged nodes and their incident edges.

    Indices in ``flagged`` refer to positions in ``g``.  The returned graph
    keeps the original labels of the surviving nodes.
    """
    flagged = set(int(k) for k in flagged)
    bad = [k for k in flagged if not 0 <= k < g.n_nodes]
    if bad:
        raise GraphError(f"flagged indices out of range: {sorted(bad)}")
    keep = [k for k in range(g.n_nodes) if k not in flagged]
    if not keep:
        raise GraphError("cannot prune every node")
    idx = np.array(keep)
    return Graph(g.weights[np.ix_(idx, idx)], tuple(g.labels[k] for k in keep))


def masked_weights(g: Graph, flagged) -> np.ndarray:
    """Full-size weight matrix with rows and columns of flagged nodes zeroed.

    This is the in-place equivalent of :func:`prune` used by the simulator,
    which keeps a fixed node indexing.
    """
    w = np.array(g.weights)
    mask = np.asarray(flagged, dtype=bool)
    w[mask, :] = 0.0
    w[:, mask] = 0.0
    return w
