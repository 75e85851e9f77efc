"""1-WL color refinement, brute-force isomorphism and the factor audit."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .exceptions import ParameterError, RetryError
from .graph import Graph, complete_graph, cycle_graph, degrees, density, disjoint_union
from .spectral import FactorConfig, graph_factors, spectrum


@dataclass(frozen=True)
class ColorAssignment:
    colors: tuple
    round: int
    stable: bool

    @property
    def num_colors(self) -> int:
        return len(set(self.colors))


def _first_occurrence(keys: Sequence) -> list:
    ids: dict = {}
    return [ids.setdefault(k, len(ids)) for k in keys]


def wl_refine(g: Graph, init: Optional[Sequence] = None) -> ColorAssignment:
    """Refine node colors until the partition stops splitting.

    New color of ``v`` is the canonical id of ``(color(v), sorted neighbour
    colors)``; ids are numbered by first occurrence so the result is
    independent of hashing.
    """
    n = g.num_nodes
    if init is not None and len(init) != n:
        raise ParameterError(f"init has {len(init)} colors for {n} nodes")
    colors = _first_occurrence(init if init is not None else [0] * n)
    nbrs = g.neighbors()
    rounds = 0
    stable = n == 0
    while rounds < max(n, 1) and not stable:
        rounds += 1
        sigs = [(colors[v], tuple(sorted(colors[u] for u in nbrs[v]))) for v in range(n)]
        new = _first_occurrence(sigs)
        stable = len(set(new)) == len(set(colors))
        colors = new
    return ColorAssignment(tuple(colors), rounds, stable)


def wl_distinguish(g1: Graph, g2: Graph) -> bool:
    """True iff 1-WL separates the graphs (joint refinement on the union)."""
    if g1.num_nodes != g2.num_nodes:
        return True
    colors = wl_refine(disjoint_union(g1, g2)).colors
    n = g1.num_nodes
    return sorted(colors[:n]) != sorted(colors[n:])


def _quantized_rows(features, quantum: float = 1e-9) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    return np.round(x / quantum).astype(np.int64)


def subtree_isomorphic(g1: Graph, v1: int, g2: Graph, v2: int, features1, features2) -> bool:
    """Whether two rooted one-hop neighbourhoods match under a bijection.

    Requires equal root features, equal degrees and equal multisets of
    neighbour feature rows (rows compared after 1e-9 quantization).
    """
    f1, f2 = _quantized_rows(features1), _quantized_rows(features2)
    if not np.array_equal(f1[v1], f2[v2]):
        return False
    n1, n2 = g1.neighbors()[v1], g2.neighbors()[v2]
    if len(n1) != len(n2):
        return False
    rows1 = sorted(tuple(f1[u].tolist()) for u in n1)
    rows2 = sorted(tuple(f2[u].tolist()) for u in n2)
    return rows1 == rows2


def random_regular_graph(n: int, k: int, seed=None, max_attempts: int = 1000) -> Graph:
    """k-regular simple graph from the pairing (configuration) model.

    Whole pairings with a self-loop or a repeated edge are rejected and
    redrawn, up to ``max_attempts`` times.
    """
    if n * k % 2 or not 0 <= k < n:
        raise ParameterError(f"no {k}-regular simple graph on {n} nodes")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    stubs = np.repeat(np.arange(n), k)
    for _ in range(max_attempts):
        perm = rng.permutation(stubs)
        pairs = perm.reshape(-1, 2)
        if np.any(pairs[:, 0] == pairs[:, 1]):
            continue
        edges = {(min(a, b), max(a, b)) for a, b in pairs.tolist()}
        if len(edges) == len(pairs):
            return Graph(n, sorted(edges))
    raise RetryError(f"pairing model failed {max_attempts} times for n={n}, k={k}")


def canonical_pair_c6_vs_2c3():
    """The 6-cycle and two disjoint triangles: both 2-regular on 6 nodes."""
    return cycle_graph(6), disjoint_union(complete_graph(3), complete_graph(3))


def is_connected(g: Graph) -> bool:
    if g.num_nodes <= 1:
        return True
    nbrs = g.neighbors()
    seen, stack = {0}, [0]
    while stack:
        for u in nbrs[stack.pop()]:
            if u not in seen:
                seen.add(u)
                stack.append(u)
    return len(seen) == g.num_nodes


def _edge_set(g: Graph) -> frozenset:
    return frozenset(g.edges)


def are_isomorphic(g1: Graph, g2: Graph) -> bool:
    """Exact isomorphism by trying every degree-preserving bijection."""
    if g1.num_nodes != g2.num_nodes or g1.num_edges != g2.num_edges:
        return False
    d1, d2 = degrees(g1), degrees(g2)
    if sorted(d1) != sorted(d2):
        return False
    target = _edge_set(g2)
    classes = sorted(set(d1.tolist()))
    src = [np.flatnonzero(d1 == d).tolist() for d in classes]
    dst = [np.flatnonzero(d2 == d).tolist() for d in classes]
    for choice in itertools.product(*(itertools.permutations(t) for t in dst)):
        mapping = {}
        for s, t in zip(src, choice):
            mapping.update(zip(s, t))
        if all((min(mapping[u], mapping[v]), max(mapping[u], mapping[v])) in target for u, v in g1.edges):
            return True
    return False


def _invariant(g: Graph):
    nbrs = g.neighbors()
    deg = [len(x) for x in nbrs]
    return (
        g.num_nodes,
        g.num_edges,
        tuple(sorted((deg[v], tuple(sorted(deg[u] for u in nbrs[v]))) for v in range(g.num_nodes))),
    )


def enumerate_small_graphs(max_n: int, connected_only: bool = False) -> list:
    """All simple graphs on 1..max_n nodes up to isomorphism.

    Graphs on ``n`` nodes come from those on ``n - 1`` nodes plus one new
    vertex joined to every possible subset; duplicates are removed with
    :func:`are_isomorphic`.
    """
    if max_n > 7:
        raise ParameterError("enumeration is limited to max_n <= 7")
    out = []
    level = [Graph(1)] if max_n >= 1 else []
    for n in range(1, max_n + 1):
        if n > 1:
            buckets: dict = {}
            level_next = []
            for base in level:
                for r in range(n):
                    for subset in itertools.combinations(range(n - 1), r):
                        cand = Graph(n, list(base.edges) + [(u, n - 1) for u in subset])
                        bucket = buckets.setdefault(_invariant(cand), [])
                        if not any(are_isomorphic(cand, other) for other in bucket):
                            bucket.append(cand)
                            level_next.append(cand)
            level = level_next
        out.extend(level)
    if connected_only:
        out = [g for g in out if is_connected(g)]
    return out


def graph_key(g: Graph, cfg: FactorConfig = FactorConfig()):
    """``(density, |V|, quantized spectrum)`` of a whole graph."""
    return (density(g), g.num_nodes, tuple(spectrum(g, cfg).tolist()))


def factor_injectivity_audit(max_n: int, cfg: FactorConfig = FactorConfig()) -> list:
    """Non-isomorphic pairs whose density, size and spectrum all coincide."""
    graphs = enumerate_small_graphs(max_n)
    keys = [graph_key(g, cfg) for g in graphs]
    groups: dict = {}
    for i, k in enumerate(keys):
        groups.setdefault(k, []).append(i)
    report = []
    for members in groups.values():
        for i, j in itertools.combinations(members, 2):
            a, b = graphs[i], graphs[j]
            report.append(
                {
                    "graph_a": [list(e) for e in a.edges],
                    "graph_b": [list(e) for e in b.edges],
                    "n": a.num_nodes,
                    "m": a.num_edges,
                    "spectrum": list(keys[i][2]),
                    "connected": is_connected(a) and is_connected(b),
                    "index_a": i,
                    "index_b": j,
                }
            )
    report.sort(key=lambda r: (r["index_a"], r["index_b"]))
    return report


def xi_multiset(g: Graph, cfg: FactorConfig = FactorConfig()) -> tuple:
    return tuple(sorted(graph_factors(g, cfg).tolist()))


def expressivity_check(max_n: int, cfg: FactorConfig = FactorConfig()) -> dict:
    """Compare 1-WL and node-factor multisets over all small-graph pairs.

    Returns the pairs 1-WL separates but the factor multisets do not
    (``lost``) and the pairs 1-WL misses but the factors separate
    (``gained``).
    """
    graphs = enumerate_small_graphs(max_n)
    xis = [xi_multiset(g, cfg) for g in graphs]
    lost, gained = [], []
    for i, j in itertools.combinations(range(len(graphs)), 2):
        wl = wl_distinguish(graphs[i], graphs[j])
        xi = xis[i] != xis[j]
        if wl and not xi:
            lost.append((i, j))
        elif xi and not wl:
            gained.append((i, j))
    return {"graphs": graphs, "lost": lost, "gained": gained}
