"""Immutable CSR representation of an undirected training graph.

The adjacency is stored as directed arcs: every undirected edge (u, v)
with u != v contributes the two arcs (u, v) and (v, u); a self-loop
(v, v) is stored as a single arc. Arc values hold the row-normalized
adjacency (each row divided by the node degree), so the value matrix is
row-stochastic on non-isolated nodes but not symmetric.

All arrays are frozen after construction; a Graph may be shared freely
across threads.
"""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Graph",
    "Subgraph",
    "build_graph",
    "induced_subgraph",
    "arc_lookup",
    "arc_source_nodes",
    "empty_subgraph",
]


@dataclass(frozen=True)
class Graph:
    """CSR adjacency of an undirected graph with row-stochastic values.

    Attributes
    ----------
    num_nodes : int
        Node count; IDs are dense integers in [0, num_nodes).
    num_edges : int
        Undirected edge count. Self-loops count once.
    row_offsets : ndarray of int64, shape (num_nodes + 1,)
        Arc range of node v is [row_offsets[v], row_offsets[v + 1]).
    col_indices : ndarray of int64, shape (num_arcs,)
        Neighbor IDs, strictly increasing within each row.
    norm_values : ndarray of float64, shape (num_arcs,)
        Row-normalized adjacency entry per arc (1 / degree of the row
        node), so each non-empty row sums to 1.
    degrees : ndarray of int64, shape (num_nodes,)
        Arc count per row (self-loop arcs count once).
    edge_endpoints : ndarray of int64, shape (num_edges, 2)
        Undirected edge table, each row (u, v) with u <= v, sorted
        lexicographically. Row index is the undirected edge ID.
    arc_to_edge : ndarray of int64, shape (num_arcs,)
        Undirected edge ID of each arc (both arcs of an edge share it).
    """

    num_nodes: int
    num_edges: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    norm_values: np.ndarray
    degrees: np.ndarray
    edge_endpoints: np.ndarray
    arc_to_edge: np.ndarray

    @property
    def num_arcs(self) -> int:
        return int(self.col_indices.shape[0])

    def neighbors(self, v: int) -> np.ndarray:
        """Neighbor IDs of ``v`` (read-only view)."""
        return self.col_indices[self.row_offsets[v] : self.row_offsets[v + 1]]


@dataclass(frozen=True)
class Subgraph:
    """Node-induced subgraph in local IDs with back-references.

    Attributes
    ----------
    nodes : ndarray of int64
        Original node IDs, sorted and unique. Local ID i maps to
        nodes[i].
    row_offsets, col_indices : ndarray of int64
        Local CSR over local IDs.
    arc_origin : ndarray of int64
        For each local arc, the arc index in the parent graph.
    sample_multiplicity : ndarray of int64
        How many times each node was emitted by the sampler before
        deduplication.
    """

    nodes: np.ndarray
    row_offsets: np.ndarray
    col_indices: np.ndarray
    arc_origin: np.ndarray
    sample_multiplicity: np.ndarray

    @property
    def num_nodes(self) -> int:
        return int(self.nodes.shape[0])

    @property
    def num_arcs(self) -> int:
        return int(self.col_indices.shape[0])


def _freeze(*arrays: np.ndarray) -> None:
    for a in arrays:
        a.setflags(write=False)


def build_graph(
    edge_list: Iterable[tuple[int, int]] | np.ndarray,
    num_nodes: int,
    self_loops: bool = False,
) -> Graph:
    """Build the immutable CSR graph from an undirected edge list.

    Duplicate pairs and both orientations of the same edge are
    deduplicated. With ``self_loops`` set, the loop (v, v) is added for
    every node before degree normalization; loops present in the input
    are kept either way.

    Parameters
    ----------
    edge_list : iterable of (u, v) pairs or (k, 2) array
    num_nodes : int
        Must be positive; all endpoints must lie in [0, num_nodes).
    self_loops : bool
        Add (v, v) for every v before normalization.

    Raises
    ------
    ValueError
        On an empty graph (num_nodes <= 0) or out-of-range endpoint.
    """
    if num_nodes <= 0:
        raise ValueError("graph must have at least one node")
    pairs = np.asarray(list(edge_list) if not isinstance(edge_list, np.ndarray) else edge_list)
    pairs = pairs.reshape(-1, 2).astype(np.int64, copy=False)
    if pairs.size and (pairs.min() < 0 or pairs.max() >= num_nodes):
        bad = pairs[(pairs < 0).any(axis=1) | (pairs >= num_nodes).any(axis=1)][0]
        raise ValueError(f"edge ({bad[0]},{bad[1]}) out of range for {num_nodes} nodes")

    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    if self_loops:
        all_ids = np.arange(num_nodes, dtype=np.int64)
        lo = np.concatenate([lo, all_ids])
        hi = np.concatenate([hi, all_ids])

    # Dedup + canonical lexicographic edge order via a scalar key.
    keys = np.unique(lo * np.int64(num_nodes) + hi)
    lo, hi = keys // num_nodes, keys % num_nodes
    num_edges = int(keys.shape[0])
    edge_endpoints = np.stack([lo, hi], axis=1)

    nonloop = lo != hi
    edge_ids = np.arange(num_edges, dtype=np.int64)
    rows = np.concatenate([lo, hi[nonloop]])
    cols = np.concatenate([hi, lo[nonloop]])
    arc_eid = np.concatenate([edge_ids, edge_ids[nonloop]])
    order = np.lexsort((cols, rows))
    rows, cols, arc_eid = rows[order], cols[order], arc_eid[order]

    degrees = np.bincount(rows, minlength=num_nodes).astype(np.int64)
    row_offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(degrees, out=row_offsets[1:])
    norm_values = 1.0 / degrees[rows].astype(np.float64) if rows.size else np.zeros(0)

    _freeze(row_offsets, cols, norm_values, degrees, edge_endpoints, arc_eid)
    return Graph(
        num_nodes=num_nodes,
        num_edges=num_edges,
        row_offsets=row_offsets,
        col_indices=cols,
        norm_values=norm_values,
        degrees=degrees,
        edge_endpoints=edge_endpoints,
        arc_to_edge=arc_eid,
    )


def induced_subgraph(g: Graph, node_ids: Iterable[int] | np.ndarray) -> Subgraph:
    """Extract the subgraph induced by a multiset of node IDs.

    The local CSR contains exactly the parent arcs with both endpoints
    in the set. Multiplicities of repeated IDs are recorded.

    Raises
    ------
    ValueError
        On an empty node set or an out-of-range ID.
    """
    ids = np.asarray(list(node_ids) if not isinstance(node_ids, np.ndarray) else node_ids)
    ids = ids.ravel().astype(np.int64, copy=False)
    if ids.size == 0:
        raise ValueError("cannot induce a subgraph from an empty node set")
    if ids.min() < 0 or ids.max() >= g.num_nodes:
        raise ValueError("node ID out of range")
    nodes, multiplicity = np.unique(ids, return_counts=True)

    starts = g.row_offsets[nodes]
    counts = g.row_offsets[nodes + 1] - starts
    total = int(counts.sum())
    if total:
        # Concatenate the parent arc ranges of all selected rows.
        shift = np.zeros(nodes.shape[0], dtype=np.int64)
        np.cumsum(counts[:-1], out=shift[1:])
        arc_idx = np.repeat(starts - shift, counts) + np.arange(total, dtype=np.int64)
        cols = g.col_indices[arc_idx]
        pos = np.searchsorted(nodes, cols)
        pos_c = np.minimum(pos, nodes.shape[0] - 1)
        keep = nodes[pos_c] == cols
        local_rows = np.repeat(np.arange(nodes.shape[0], dtype=np.int64), counts)[keep]
        local_cols = pos[keep].astype(np.int64)
        arc_origin = arc_idx[keep]
    else:
        local_rows = np.zeros(0, dtype=np.int64)
        local_cols = np.zeros(0, dtype=np.int64)
        arc_origin = np.zeros(0, dtype=np.int64)

    row_offsets = np.zeros(nodes.shape[0] + 1, dtype=np.int64)
    np.cumsum(np.bincount(local_rows, minlength=nodes.shape[0]), out=row_offsets[1:])

    _freeze(nodes, row_offsets, local_cols, arc_origin, multiplicity)
    return Subgraph(
        nodes=nodes,
        row_offsets=row_offsets,
        col_indices=local_cols,
        arc_origin=arc_origin,
        sample_multiplicity=multiplicity.astype(np.int64),
    )


def empty_subgraph() -> Subgraph:
    """Subgraph with no nodes (a sampler draw that selected nothing)."""
    z = np.zeros(0, dtype=np.int64)
    off = np.zeros(1, dtype=np.int64)
    _freeze(z, off)
    return Subgraph(nodes=z, row_offsets=off, col_indices=z, arc_origin=z, sample_multiplicity=z)


def arc_lookup(g: Graph, u: int, v: int) -> int | None:
    """Arc index of (u, v), or None if the arc does not exist."""
    if not (0 <= u < g.num_nodes and 0 <= v < g.num_nodes):
        raise ValueError("node ID out of range")
    start, end = int(g.row_offsets[u]), int(g.row_offsets[u + 1])
    i = start + int(np.searchsorted(g.col_indices[start:end], v))
    if i < end and g.col_indices[i] == v:
        return i
    return None


def arc_source_nodes(g: Graph) -> np.ndarray:
    """Row (aggregating) node of every arc, aligned with col_indices."""
    return np.repeat(np.arange(g.num_nodes, dtype=np.int64), np.diff(g.row_offsets))
