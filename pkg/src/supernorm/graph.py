"""Graph containers, neighborhood subgraphs and normalized adjacencies."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .exceptions import DimensionError, ValidationError


def _canonical_edges(edges: Iterable[Sequence[int]], num_nodes: int) -> tuple:
    seen = set()
    for e in edges:
        if len(e) != 2:
            raise ValidationError(f"edge {tuple(e)!r} is not a pair")
        u, v = int(e[0]), int(e[1])
        if u == v:
            raise ValidationError(f"self-loop at node {u}")
        if not (0 <= u < num_nodes and 0 <= v < num_nodes):
            raise ValidationError(f"edge ({u}, {v}) out of range for {num_nodes} nodes")
        pair = (u, v) if u < v else (v, u)
        if pair in seen:
            raise ValidationError(f"parallel edge ({pair[0]}, {pair[1]})")
        seen.add(pair)
    return tuple(sorted(seen))


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph.

    Edges are stored as a sorted tuple of ``(u, v)`` pairs with ``u < v``.
    Self-loops and parallel edges are rejected.
    """

    num_nodes: int
    edges: tuple = ()
    features: Optional[np.ndarray] = None
    label: Optional[float] = None

    def __post_init__(self):
        n = int(self.num_nodes)
        if n < 0:
            raise ValidationError("num_nodes must be non-negative")
        object.__setattr__(self, "num_nodes", n)
        object.__setattr__(self, "edges", _canonical_edges(self.edges, n))
        if self.features is not None:
            x = np.asarray(self.features, dtype=np.float64)
            if x.ndim == 1:
                x = x.reshape(n, -1) if n else x.reshape(0, 0)
            if x.ndim != 2 or x.shape[0] != n:
                raise DimensionError(
                    f"features have {x.shape[0] if x.ndim else 0} rows, expected {n}"
                )
            x.setflags(write=False)
            object.__setattr__(self, "features", x)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.num_nodes, self.num_nodes))
        if self.edges:
            e = np.asarray(self.edges)
            a[e[:, 0], e[:, 1]] = 1.0
            a[e[:, 1], e[:, 0]] = 1.0
        return a

    def neighbors(self) -> list:
        nbrs = [[] for _ in range(self.num_nodes)]
        for u, v in self.edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        return [sorted(x) for x in nbrs]

    def relabel(self, perm: Sequence[int]) -> "Graph":
        """Return the graph with node ``i`` renamed to ``perm[i]``."""
        perm = list(perm)
        if sorted(perm) != list(range(self.num_nodes)):
            raise ValidationError("perm is not a permutation of the nodes")
        feats = None
        if self.features is not None:
            feats = np.empty_like(self.features)
            feats[perm] = self.features
        return Graph(
            self.num_nodes,
            [(perm[u], perm[v]) for u, v in self.edges],
            feats,
            self.label,
        )

    def with_features(self, features) -> "Graph":
        return Graph(self.num_nodes, self.edges, features, self.label)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        if self.num_nodes != other.num_nodes or self.edges != other.edges:
            return False
        if self.label != other.label:
            return False
        if (self.features is None) != (other.features is None):
            return False
        return self.features is None or np.array_equal(self.features, other.features)

    def __hash__(self):
        return hash((self.num_nodes, self.edges))

    def __repr__(self):
        return f"Graph(num_nodes={self.num_nodes}, num_edges={self.num_edges})"


def neighborhood_subgraph(g: Graph, v: int) -> Graph:
    """Subgraph induced by ``v`` and its neighbours.

    Nodes are relabelled ``0..k-1`` in ascending order of their original
    index. Features and label are dropped.
    """
    if not 0 <= v < g.num_nodes:
        raise IndexError(f"node {v} out of range for graph with {g.num_nodes} nodes")
    closed = {v}
    for a, b in g.edges:
        if a == v:
            closed.add(b)
        elif b == v:
            closed.add(a)
    order = sorted(closed)
    index = {node: i for i, node in enumerate(order)}
    edges = [(index[a], index[b]) for a, b in g.edges if a in index and b in index]
    return Graph(len(order), edges)


def density(g: Graph) -> float:
    n = g.num_nodes
    if n <= 1:
        return 0.0
    return 2.0 * g.num_edges / (n * (n - 1))


def degrees(g: Graph) -> np.ndarray:
    deg = np.zeros(g.num_nodes, dtype=np.int64)
    for u, v in g.edges:
        deg[u] += 1
        deg[v] += 1
    return deg


def normalized_adjacency(g: Graph, mode: str = "symmetric") -> np.ndarray:
    """Self-loop augmented adjacency, normalized by the augmented degrees.

    ``symmetric`` returns ``D^-1/2 (A+I) D^-1/2`` and ``random_walk`` returns
    ``D^-1 (A+I)``, where ``D`` is the degree matrix of ``A+I``.
    """
    if g.num_nodes < 1:
        raise ValidationError("normalized_adjacency needs at least one node")
    a = g.adjacency() + np.eye(g.num_nodes)
    deg = a.sum(axis=1)
    if mode == "symmetric":
        s = 1.0 / np.sqrt(deg)
        return s[:, None] * a * s[None, :]
    if mode == "random_walk":
        return a / deg[:, None]
    raise ValueError(f"unknown mode {mode!r}; expected 'symmetric' or 'random_walk'")


def disjoint_union(*graphs: Graph) -> Graph:
    edges, offset = [], 0
    for g in graphs:
        edges.extend((u + offset, v + offset) for u, v in g.edges)
        offset += g.num_nodes
    return Graph(offset, edges)


def cycle_graph(n: int) -> Graph:
    if n < 3:
        raise ValidationError("a cycle needs at least 3 nodes")
    return Graph(n, [(i, (i + 1) % n) for i in range(n)])


def complete_graph(n: int) -> Graph:
    return Graph(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def path_graph(n: int) -> Graph:
    return Graph(n, [(i, i + 1) for i in range(n - 1)])


def star_graph(leaves: int) -> Graph:
    return Graph(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


@dataclass
class BatchedGraphs:
    """Several graphs laid out as consecutive row segments."""

    graphs: list
    segment_offsets: np.ndarray
    features: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None
    _adjacency: dict = field(default_factory=dict, repr=False)

    @property
    def num_graphs(self) -> int:
        return len(self.graphs)

    @property
    def n_total(self) -> int:
        return int(self.segment_offsets[-1]) if len(self.segment_offsets) else 0

    @property
    def starts(self) -> np.ndarray:
        return np.concatenate([[0], self.segment_offsets[:-1]]).astype(np.int64)

    def segment_ids(self) -> np.ndarray:
        sizes = np.diff(np.concatenate([[0], self.segment_offsets]))
        return np.repeat(np.arange(self.num_graphs), sizes)

    def segment(self, i: int) -> slice:
        return slice(int(self.starts[i]), int(self.segment_offsets[i]))

    def block_adjacency(self, mode: Optional[str] = None) -> np.ndarray:
        """Block-diagonal adjacency; ``mode`` selects a normalized variant."""
        if mode not in self._adjacency:
            out = np.zeros((self.n_total, self.n_total))
            for i, g in enumerate(self.graphs):
                s = self.segment(i)
                out[s, s] = g.adjacency() if mode is None else normalized_adjacency(g, mode)
            self._adjacency[mode] = out
        return self._adjacency[mode]


def batch(graphs: Sequence[Graph]) -> BatchedGraphs:
    """Concatenate ``graphs`` into one batch, preserving order."""
    graphs = list(graphs)
    for i, g in enumerate(graphs):
        if g.num_nodes == 0:
            raise ValidationError(f"graph {i} is empty; segments must be nonempty")
    offsets = np.cumsum([g.num_nodes for g in graphs], dtype=np.int64)
    has_feats = {g.features is not None for g in graphs}
    if len(has_feats) > 1:
        raise DimensionError("either all graphs carry features or none do")
    features = None
    if graphs and has_feats == {True}:
        dims = {g.features.shape[1] for g in graphs}
        if len(dims) > 1:
            raise DimensionError(f"mismatched feature dimensions {sorted(dims)}")
        features = np.concatenate([g.features for g in graphs], axis=0)
    labels = None
    if graphs and all(g.label is not None for g in graphs):
        labels = np.asarray([g.label for g in graphs], dtype=np.float64)
    return BatchedGraphs(graphs, offsets, features, labels)
