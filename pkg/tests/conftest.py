"""Shared graph fixtures and independent test oracles."""

from __future__ import annotations

import numpy as np
import pytest

from subgcn import build_graph


@pytest.fixture
def single_edge():
    return build_graph([(0, 1)], 2)


@pytest.fixture
def triangle():
    return build_graph([(0, 1), (1, 2), (0, 2)], 3)


@pytest.fixture
def path3():
    return build_graph([(0, 1), (1, 2)], 3)


@pytest.fixture
def square_chord():
    """Square with a chord: edges (0,1), (1,2), (2,3), (1,3); degrees 1,3,2,2."""
    return build_graph([(0, 1), (1, 2), (2, 3), (1, 3)], 4)


@pytest.fixture
def star6():
    """Star with center 0 and five leaves."""
    return build_graph([(0, i) for i in range(1, 6)], 6)


def parent_edge_set(g) -> set[tuple[int, int]]:
    """All arcs of g as a set of (row, col) pairs, read straight off the CSR."""
    pairs = set()
    for v in range(g.num_nodes):
        for a in range(g.row_offsets[v], g.row_offsets[v + 1]):
            pairs.add((v, int(g.col_indices[a])))
    return pairs


def brute_force_induce(g, node_ids) -> tuple[np.ndarray, set[tuple[int, int]]]:
    """O(k^2) all-pairs induction oracle: unique nodes and the arc set
    (in original IDs) that the induced subgraph must contain."""
    nodes = np.unique(np.asarray(list(node_ids), dtype=np.int64))
    arcs = parent_edge_set(g)
    kept = {(int(u), int(v)) for u in nodes for v in nodes if (int(u), int(v)) in arcs}
    return nodes, kept


def subgraph_arcs_original(sub) -> set[tuple[int, int]]:
    """Arc set of a Subgraph mapped back to original node IDs."""
    out = set()
    for i in range(sub.num_nodes):
        for a in range(sub.row_offsets[i], sub.row_offsets[i + 1]):
            out.add((int(sub.nodes[i]), int(sub.nodes[sub.col_indices[a]])))
    return out


@pytest.fixture
def induction_oracle():
    return brute_force_induce


@pytest.fixture
def subgraph_arc_reader():
    return subgraph_arcs_original


def random_graph(rng: np.random.Generator, max_nodes: int = 200):
    """Random ER-style graph with at least one edge."""
    n = int(rng.integers(2, max_nodes + 1))
    p = float(rng.uniform(0.02, 0.3))
    iu, iv = np.triu_indices(n, k=1)
    mask = rng.random(iu.shape[0]) < p
    if not mask.any():
        mask[rng.integers(iu.shape[0])] = True
    return build_graph(np.stack([iu[mask], iv[mask]], axis=1), n)


@pytest.fixture
def random_graph_factory():
    return random_graph
