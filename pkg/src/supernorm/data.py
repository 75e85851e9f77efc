"""Synthetic datasets and the density-bucketed split."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .exceptions import ParameterError, RetryError, ValidationError
from .graph import Graph, degrees, density
from .wl import random_regular_graph


def triangle_count(g: Graph) -> int:
    a = g.adjacency()
    return int(round(np.trace(a @ a @ a) / 6.0))


def regular_triangle_dataset(
    num_graphs: int, n: int = 12, k: int = 3, seed=0, max_attempts: int = 10000
) -> list:
    """Balanced k-regular graphs labelled by whether they contain a triangle.

    Every graph is k-regular on ``n`` nodes, so 1-WL with uniform colors
    cannot tell the classes apart. Node features are a constant column.
    Labels alternate 0, 1, 0, ...; each graph is drawn by rejection until
    its triangle status matches its label.
    """
    rng = np.random.default_rng(seed)
    graphs = []
    for i in range(num_graphs):
        want = i % 2
        for _ in range(max_attempts):
            g = random_regular_graph(n, k, rng)
            if (triangle_count(g) > 0) == bool(want):
                graphs.append(Graph(n, g.edges, np.ones((n, 1)), want))
                break
        else:
            raise RetryError(f"no {'triangle' if want else 'triangle-free'} graph in {max_attempts} draws")
    return graphs


@dataclass
class NodeDataset:
    graph: Graph
    labels: np.ndarray
    train_idx: np.ndarray
    valid_idx: np.ndarray
    test_idx: np.ndarray


def sbm_node_dataset(
    block_sizes=(100, 100),
    p_in=0.1,
    p_out: float = 0.01,
    feature_dim: int = 16,
    signal: float = 1.0,
    train_per_class: int = 10,
    valid_frac: float = 0.2,
    seed=0,
) -> NodeDataset:
    """Two-block stochastic block model with noisy class-dependent features.

    Features are Gaussian with class means ``+signal`` / ``-signal`` on the
    first coordinate and unit noise everywhere. A few labelled nodes per
    class form the training set; the rest is split into validation and test.
    """
    rng = np.random.default_rng(seed)
    sizes = np.broadcast_to(np.asarray(block_sizes, dtype=np.int64), (2,))
    n = int(sizes.sum())
    labels = np.repeat([0, 1], sizes)
    same = labels[:, None] == labels[None, :]
    p_in = np.broadcast_to(np.asarray(p_in, dtype=np.float64), (2,))
    prob = np.where(same, p_in[labels][:, None], p_out)
    upper = np.triu(rng.random((n, n)) < prob, 1)
    edges = np.argwhere(upper)
    x = rng.normal(size=(n, feature_dim))
    x[:, 0] += np.where(labels == 1, signal, -signal)
    train = np.concatenate(
        [rng.choice(np.flatnonzero(labels == c), train_per_class, replace=False) for c in (0, 1)]
    )
    rest = rng.permutation(np.setdiff1d(np.arange(n), train))
    n_valid = int(round(valid_frac * len(rest)))
    g = Graph(n, edges.tolist(), x)
    return NodeDataset(g, labels, np.sort(train), np.sort(rest[:n_valid]), np.sort(rest[n_valid:]))


def density_bucket(d: float) -> int:
    """Index 0..9 for ``[0.0, 0.1), ..., [0.9, 1.0)`` and 10 for exactly 1."""
    if d >= 1.0:
        return 10
    return min(int(np.floor(d * 10.0 + 1e-12)), 9)


def hierarchical_split(
    graphs: Sequence[Graph],
    valid_frac: float,
    test_frac: float,
    stratify: Optional[Sequence] = None,
):
    """Deterministic held-out selection inside edge-density buckets.

    Graphs are grouped into eleven density buckets (and by ``stratify``
    label when given), each group is sorted by average degree, and every
    ``k``-th graph is held out, with ``k`` chosen per group so the held-out
    share matches ``valid_frac + test_frac``. Held-out graphs alternate
    between validation and test in proportion to the two fractions.

    Returns index arrays ``(train, valid, test)``.
    """
    if len(graphs) == 0:
        raise ValidationError("cannot split an empty dataset")
    if valid_frac < 0 or test_frac < 0 or valid_frac + test_frac >= 1.0:
        raise ParameterError("valid and test fractions must be non-negative and sum below 1")
    held = valid_frac + test_frac
    labels = list(stratify) if stratify is not None else [None] * len(graphs)
    groups: dict = {}
    for i, g in enumerate(graphs):
        avg_deg = float(degrees(g).mean()) if g.num_nodes else 0.0
        groups.setdefault((density_bucket(density(g)), str(labels[i])), []).append((avg_deg, i))
    valid, test = [], []
    test_share = test_frac / held if held > 0 else 0.0
    for key in sorted(groups):
        members = [i for _, i in sorted(groups[key])]
        count = int(round(len(members) * held))
        if count == 0:
            continue
        step = max(1, len(members) // count)
        picked = members[::step][:count]
        for j, idx in enumerate(picked):
            # Bresenham-style interleave of test among held-out picks
            if int(np.floor((j + 1) * test_share + 1e-9)) > int(np.floor(j * test_share + 1e-9)):
                test.append(idx)
            else:
                valid.append(idx)
    held_out = set(valid) | set(test)
    train = [i for i in range(len(graphs)) if i not in held_out]
    return np.array(train, dtype=np.int64), np.array(sorted(valid), dtype=np.int64), np.array(sorted(test), dtype=np.int64)
