"""Subgraph samplers and the discrete distributions they draw from.

Five samplers produce node multisets that are induced into subgraphs:

- ``node``: i.i.d. nodes weighted by squared column norms of the
  normalized adjacency.
- ``edge``: m edges with replacement, weighted by the sum of inverse
  endpoint degrees (the fast approximate edge sampler).
- ``edge_independent``: one Bernoulli decision per edge with inclusion
  probability min(1, m * w_e / sum(w)); the exact object of the
  variance analysis.
- ``rw``: r uniform roots, each walking h uniform-neighbor hops.
- ``mrw``: a degree-weighted frontier of r walkers expanded to a node
  budget n.

A degenerate ``full`` kind returns the whole graph and backs full-batch
baselines and normalization sanity checks.

Every draw is a pure function of (graph, config, stream index): stream
i uses a counter-based Philox generator keyed by (seed, i), so parallel
producers yield bit-identical streams regardless of scheduling.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass

import numpy as np

from .graph import Graph, Subgraph, empty_subgraph, induced_subgraph

__all__ = [
    "SamplerConfig",
    "NodeWeights",
    "EdgeWeights",
    "make_rng",
    "node_weights",
    "edge_weights",
    "sample_node",
    "sample_edge_approx",
    "sample_edge_independent",
    "sample_rw",
    "sample_mrw",
    "sample",
    "SubgraphProducer",
]

logger = logging.getLogger(__name__)

SAMPLER_KINDS = ("node", "edge", "edge_independent", "rw", "mrw", "full")


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for the given seed and stream key."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(stream))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SamplerConfig:
    """Tagged sampler choice with its budgets.

    ``n`` is the node budget (node, mrw), ``m`` the edge budget (edge,
    edge_independent), ``r`` the root count (rw, mrw) and ``h`` the walk
    length in hops (rw). Budgets are upper bounds on the subgraph size,
    not exact sizes.
    """

    kind: str
    n: int | None = None
    m: int | None = None
    r: int | None = None
    h: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in SAMPLER_KINDS:
            raise ValueError(f"unknown sampler kind {self.kind!r}; expected one of {SAMPLER_KINDS}")
        need = {
            "node": ("n",),
            "edge": ("m",),
            "edge_independent": ("m",),
            "rw": ("r", "h"),
            "mrw": ("n", "r"),
            "full": (),
        }[self.kind]
        for name in need:
            value = getattr(self, name)
            if value is None or value < 1:
                raise ValueError(f"sampler {self.kind!r} requires positive budget {name!r}")
        if self.kind == "mrw" and not self.r < self.n:
            raise ValueError("mrw requires r < n")


@dataclass(frozen=True)
class NodeWeights:
    """Node distribution proportional to squared column norms of the
    normalized adjacency."""

    weights: np.ndarray
    cumulative: np.ndarray
    total: float

    def probabilities(self) -> np.ndarray:
        return self.weights / self.total

    def draw(self, rng: np.random.Generator, k: int) -> np.ndarray:
        u = rng.random(k) * self.total
        return np.searchsorted(self.cumulative, u, side="right")


@dataclass(frozen=True)
class EdgeWeights:
    """Per-undirected-edge weights 1/deg(u) + 1/deg(v)."""

    weights: np.ndarray
    cumulative: np.ndarray
    total: float

    def probabilities(self) -> np.ndarray:
        return self.weights / self.total

    def draw(self, rng: np.random.Generator, k: int) -> np.ndarray:
        u = rng.random(k) * self.total
        return np.searchsorted(self.cumulative, u, side="right")


def node_weights(g: Graph) -> NodeWeights:
    """Weight of node u is the squared column norm sum_v (1/deg(v))^2
    over arcs (v, u).

    Raises ValueError when every node is isolated (total weight zero).
    """
    w = np.bincount(g.col_indices, weights=g.norm_values**2, minlength=g.num_nodes)
    total = float(w.sum())
    if total <= 0.0:
        raise ValueError("node distribution undefined: all nodes are isolated")
    return NodeWeights(weights=w, cumulative=np.cumsum(w), total=total)


def edge_weights(g: Graph) -> EdgeWeights:
    """Weight of edge (u, v) is 1/deg(u) + 1/deg(v).

    A self-loop counts both orientations of its single stored arc.
    """
    if g.num_edges == 0:
        raise ValueError("edge distribution undefined: graph has no edges")
    w = np.bincount(g.arc_to_edge, weights=g.norm_values, minlength=g.num_edges)
    loops = g.edge_endpoints[:, 0] == g.edge_endpoints[:, 1]
    w[loops] *= 2.0
    return EdgeWeights(weights=w, cumulative=np.cumsum(w), total=float(w.sum()))


def sample_node(
    g: Graph, n: int, rng: np.random.Generator, weights: NodeWeights | None = None
) -> Subgraph:
    """Draw n nodes i.i.d. from the node distribution and induce."""
    if n < 1:
        raise ValueError("node budget must be positive")
    dist = weights if weights is not None else node_weights(g)
    return induced_subgraph(g, dist.draw(rng, n))


def sample_edge_approx(
    g: Graph, m: int, rng: np.random.Generator, weights: EdgeWeights | None = None
) -> Subgraph:
    """Draw m edges with replacement and induce over their endpoints."""
    if m < 1:
        raise ValueError("edge budget must be positive")
    dist = weights if weights is not None else edge_weights(g)
    eids = dist.draw(rng, m)
    return induced_subgraph(g, g.edge_endpoints[eids].ravel())


def inclusion_probabilities(g: Graph, m: int, weights: EdgeWeights | None = None) -> np.ndarray:
    """Per-edge Bernoulli probabilities min(1, m * w_e / sum(w))."""
    dist = weights if weights is not None else edge_weights(g)
    return np.minimum(1.0, m * dist.weights / dist.total)


def sample_edge_independent(
    g: Graph, m: int, rng: np.random.Generator, weights: EdgeWeights | None = None
) -> tuple[Subgraph, np.ndarray]:
    """Independent per-edge Bernoulli sampling with expected count <= m.

    Returns the subgraph induced over the endpoints of the selected
    edges together with the realized boolean inclusion mask (needed by
    the variance analysis, which reasons about the pre-induction edge
    set). A draw that selects no edge yields an empty subgraph.
    """
    if m < 1:
        raise ValueError("edge budget must be positive")
    p = inclusion_probabilities(g, m, weights)
    mask = rng.random(p.shape[0]) < p
    if not mask.any():
        return empty_subgraph(), mask
    return induced_subgraph(g, g.edge_endpoints[mask].ravel()), mask


def sample_rw(g: Graph, r: int, h: int, rng: np.random.Generator) -> Subgraph:
    """r uniform roots (with replacement), each walking h uniform hops.

    A walker stranded on an isolated node stops early; this is recorded
    at debug level and the partial visit set is kept.
    """
    if r < 1 or h < 1:
        raise ValueError("rw requires r >= 1 and h >= 1")
    roots = rng.integers(0, g.num_nodes, size=r)
    visits = list(roots)
    stopped = 0
    for root in roots:
        u = int(root)
        for _ in range(h):
            d = int(g.degrees[u])
            if d == 0:
                stopped += 1
                break
            u = int(g.col_indices[g.row_offsets[u] + rng.integers(d)])
            visits.append(u)
    if stopped:
        logger.debug("rw sampler: %d of %d walkers stopped early at isolated nodes", stopped, r)
    return induced_subgraph(g, visits)


def sample_mrw(g: Graph, n: int, r: int, rng: np.random.Generator) -> Subgraph:
    """Frontier sampler: expand r degree-weighted walkers to budget n.

    Each step picks a frontier slot with probability proportional to
    its degree and moves it to a uniform neighbor; the sample is every
    node that ever enters the frontier (r roots plus n - r moves, so
    |V_s| <= n). Stops early (recorded) if the whole frontier becomes
    isolated.
    """
    if r < 1 or not r < n:
        raise ValueError("mrw requires 1 <= r < n")
    frontier = rng.integers(0, g.num_nodes, size=r)
    visits = list(frontier)
    for _ in range(n - r):
        degs = g.degrees[frontier]
        total = int(degs.sum())
        if total == 0:
            logger.debug("mrw sampler: frontier all isolated after %d nodes", len(visits))
            break
        j = int(np.searchsorted(np.cumsum(degs), rng.random() * total, side="right"))
        u = int(frontier[j])
        nb = int(g.col_indices[g.row_offsets[u] + rng.integers(degs[j])])
        frontier[j] = nb
        visits.append(nb)
    return induced_subgraph(g, visits)


@dataclass
class _Dists:
    node: NodeWeights | None = None
    edge: EdgeWeights | None = None


def _precompute(g: Graph, cfg: SamplerConfig) -> _Dists:
    d = _Dists()
    if cfg.kind == "node":
        d.node = node_weights(g)
    elif cfg.kind in ("edge", "edge_independent"):
        d.edge = edge_weights(g)
    return d


def sample(
    g: Graph, cfg: SamplerConfig, rng: np.random.Generator, dists: _Dists | None = None
) -> Subgraph:
    """Dispatch one draw of the configured sampler."""
    if dists is None:
        dists = _precompute(g, cfg)
    if cfg.kind == "node":
        return sample_node(g, cfg.n, rng, dists.node)
    if cfg.kind == "edge":
        return sample_edge_approx(g, cfg.m, rng, dists.edge)
    if cfg.kind == "edge_independent":
        return sample_edge_independent(g, cfg.m, rng, dists.edge)[0]
    if cfg.kind == "rw":
        return sample_rw(g, cfg.r, cfg.h, rng)
    if cfg.kind == "mrw":
        return sample_mrw(g, cfg.n, cfg.r, rng)
    return induced_subgraph(g, np.arange(g.num_nodes))


class SubgraphProducer:
    """Deterministic stream of subgraphs, optionally produced by a
    worker pool behind a bounded buffer.

    Stream element i is always the draw with RNG stream (cfg.seed, i),
    so serial and pooled modes yield identical sequences; ``take``
    returns elements in stream order. With ``workers`` == 0 draws happen
    in the calling thread.
    """

    def __init__(
        self,
        graph: Graph,
        cfg: SamplerConfig,
        workers: int = 0,
        capacity: int = 8,
        start: int = 0,
    ):
        if capacity < 1:
            raise ValueError("queue capacity must be positive")
        self._graph = graph
        self._cfg = cfg
        self._dists = _precompute(graph, cfg)
        self._next_out = start
        self._workers: list[threading.Thread] = []
        self._error: BaseException | None = None
        if workers > 0:
            self._lock = threading.Lock()
            self._cond = threading.Condition(self._lock)
            self._buffer: dict[int, Subgraph] = {}
            self._next_claim = start
            self._capacity = capacity
            self._stop = False
            for i in range(workers):
                t = threading.Thread(target=self._work, name=f"sampler-{i}", daemon=True)
                t.start()
                self._workers.append(t)

    def subgraph_at(self, index: int) -> Subgraph:
        """Draw stream element ``index`` directly."""
        rng = make_rng(self._cfg.seed, index)
        return sample(self._graph, self._cfg, rng, self._dists)

    def _work(self) -> None:
        while True:
            with self._cond:
                while not self._stop and self._next_claim >= self._next_out + self._capacity:
                    self._cond.wait()
                if self._stop:
                    return
                index = self._next_claim
                self._next_claim += 1
            try:
                sub = self.subgraph_at(index)
            except BaseException as exc:  # surfaced by take()
                with self._cond:
                    self._error = exc
                    self._stop = True
                    self._cond.notify_all()
                return
            with self._cond:
                self._buffer[index] = sub
                self._cond.notify_all()

    def take(self) -> Subgraph:
        """Next subgraph in stream order."""
        if not self._workers:
            sub = self.subgraph_at(self._next_out)
            self._next_out += 1
            return sub
        with self._cond:
            while self._next_out not in self._buffer and self._error is None:
                self._cond.wait()
            if self._next_out not in self._buffer:
                raise self._error
            sub = self._buffer.pop(self._next_out)
            self._next_out += 1
            self._cond.notify_all()
            return sub

    def close(self) -> None:
        if self._workers:
            with self._cond:
                self._stop = True
                self._cond.notify_all()
            for t in self._workers:
                t.join()
            self._workers = []

    def __enter__(self) -> "SubgraphProducer":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def __iter__(self):
        return self

    def __next__(self) -> Subgraph:
        return self.take()
