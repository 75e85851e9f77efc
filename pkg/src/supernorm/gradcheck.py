"""Finite-difference suite over every tape operation and the full SuperNorm layer.

Each case draws a random instance, reduces the operation's output to a
scalar with a fixed random weighting (so no gradient is trivially uniform)
and compares the tape gradient of every differentiable argument against
central differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .graph import batch, cycle_graph, complete_graph, path_graph, star_graph
from .layers import SuperNorm, supernorm
from .losses import binary_cross_entropy, cross_entropy, mean_absolute_error
from .spectral import batch_factors


def _weighted(out: ad.DiffMatrix, weight: np.ndarray) -> ad.DiffMatrix:
    return ad.sum_all(ad.hadamard(out, ad.constant(weight)))


def _away_from_zero(rng, shape, low=0.1):
    """Random values with ``|v| >= low`` so kinks (relu, abs) are not straddled."""
    v = rng.uniform(low, 1.5, size=shape)
    return v * rng.choice([-1.0, 1.0], size=shape)


def _random_offsets(rng, n_segments: int, max_size: int = 4) -> np.ndarray:
    return np.cumsum(rng.integers(1, max_size + 1, size=n_segments))


def _op_cases(rng):
    """Yield ``(name, f, x)`` triples for one random instance of every op."""
    n, d, k = (int(v) for v in rng.integers(2, 6, size=3))
    a = rng.normal(size=(n, d))
    b = rng.normal(size=(n, d))
    w_nd = rng.normal(size=(n, d))
    row = rng.normal(size=(1, d))

    def binary(name, op, left, right, weight):
        other = ad.constant(right)
        yield name + "[a]", (lambda x: _weighted(op(x, other), weight)), ad.parameter(left)
        fixed = ad.constant(left)
        yield name + "[b]", (lambda x: _weighted(op(fixed, x), weight)), ad.parameter(right)

    c = rng.normal(size=(d, k))
    yield from binary("matmul", ad.matmul, a, c, rng.normal(size=(n, k)))
    yield from binary("add", ad.add, a, b, w_nd)
    yield from binary("add_row", ad.add, a, row, w_nd)
    yield from binary("sub", ad.sub, a, b, w_nd)
    yield from binary("sub_row", ad.sub, a, row, w_nd)
    yield from binary("hadamard", ad.hadamard, a, b, w_nd)
    yield from binary("hadamard_row", ad.hadamard, a, row, w_nd)
    denom = rng.uniform(0.5, 2.0, size=(n, d))
    yield from binary("divide", ad.divide_elementwise, a, denom, w_nd)
    yield from binary("divide_row", ad.divide_elementwise, a, denom[:1], w_nd)
    base = rng.uniform(0.2, 2.0, size=(n, d))
    yield from binary("pow", ad.elementwise_pow, base, row, w_nd)

    scale = float(rng.normal())
    yield "scalar_mul", (lambda x: _weighted(ad.scalar_mul(x, scale), w_nd)), ad.parameter(a)
    yield "broadcast_row", (lambda x: _weighted(ad.broadcast_row(x, n), w_nd)), ad.parameter(row)
    yield "relu", (lambda x: _weighted(ad.relu(x), w_nd)), ad.parameter(_away_from_zero(rng, (n, d)))
    yield "mean_over_rows", (lambda x: _weighted(ad.mean_over_rows(x), row)), ad.parameter(a)
    yield "var_over_rows", (lambda x: _weighted(ad.var_over_rows(x), row)), ad.parameter(a)
    yield "sqrt_eps", (lambda x: _weighted(ad.sqrt_eps(x, 1e-5), w_nd)), ad.parameter(
        rng.uniform(0.1, 2.0, size=(n, d))
    )

    offsets = _random_offsets(rng, int(rng.integers(1, 4)))
    m = int(offsets[-1])
    w_md = rng.normal(size=(m, d))
    yield "segment_mean", (lambda x: _weighted(ad.segment_mean(x, offsets), w_md)), ad.parameter(
        rng.normal(size=(m, d))
    )
    yield "segment_sum_normalize", (
        lambda x: _weighted(ad.segment_sum_normalize(x, offsets), w_md)
    ), ad.parameter(rng.uniform(0.5, 2.0, size=(m, d)))

    tail = rng.normal(size=(k, d))
    w_cat = rng.normal(size=(n + k, d))
    yield "concat_rows", (lambda x: _weighted(ad.concat_rows([x, ad.constant(tail)]), w_cat)), ad.parameter(a)
    idx = rng.integers(0, n, size=n + 1)
    w_take = rng.normal(size=(n + 1, d))
    yield "take_rows", (lambda x: _weighted(ad.take_rows(x, idx), w_take)), ad.parameter(a)
    yield "sum_all", (lambda x: ad.sum_all(x)), ad.parameter(a)
    yield "mean_all", (lambda x: ad.mean_all(x)), ad.parameter(a)

    targets = rng.integers(0, 2, size=(n, 1)).astype(np.float64)
    yield "binary_cross_entropy", (lambda x: binary_cross_entropy(x, targets)), ad.parameter(
        rng.normal(size=(n, 1))
    )
    classes = rng.integers(0, d, size=n)
    yield "cross_entropy", (lambda x: cross_entropy(x, classes)), ad.parameter(a)
    yield "mean_absolute_error", (lambda x: mean_absolute_error(x, b)), ad.parameter(
        b + _away_from_zero(rng, (n, d))
    )


_GRAPH_MAKERS = (
    lambda r: cycle_graph(int(r.integers(3, 7))),
    lambda r: complete_graph(int(r.integers(2, 5))),
    lambda r: path_graph(int(r.integers(2, 6))),
    lambda r: star_graph(int(r.integers(2, 5))),
)


def _supernorm_cases(rng):
    """Full layer in train mode, differentiated w.r.t. input and each parameter."""
    graphs = [_GRAPH_MAKERS[int(i)](rng) for i in rng.integers(0, len(_GRAPH_MAKERS), size=int(rng.integers(1, 4)))]
    b = batch(graphs)
    factors = batch_factors(b)
    offsets = b.segment_offsets
    d = int(rng.integers(2, 5))
    h0 = rng.normal(size=(b.n_total, d))
    weight = rng.normal(size=(b.n_total, d))
    init = {
        "gamma": rng.uniform(0.5, 1.5, size=(1, d)),
        "beta": rng.normal(size=(1, d)),
        "w_rc": rng.normal(scale=0.5, size=(1, d)),
        "w_re": rng.normal(scale=0.5, size=(1, d)),
    }

    def layer():
        st = SuperNorm(d)
        for name, value in init.items():
            getattr(st, name).values[...] = value
        return st

    def wrt_input(x):
        return _weighted(supernorm(x, factors, offsets, layer()), weight)

    yield "supernorm[input]", wrt_input, ad.parameter(h0)
    for name in init:

        def wrt_param(x, name=name):
            st = layer()
            setattr(st, name, x)
            return _weighted(supernorm(ad.constant(h0), factors, offsets, st), weight)

        yield f"supernorm[{name}]", wrt_param, ad.parameter(init[name])


@dataclass
class SuiteResult:
    """Worst relative error per checked function over all instances."""

    tol: float
    worst: dict = field(default_factory=dict)

    @property
    def failures(self) -> dict:
        return {k: v for k, v in self.worst.items() if not v < self.tol}

    @property
    def passed(self) -> bool:
        return not self.failures


def run_gradcheck_suite(instances: int = 20, seed: int = 0, h: float = 1e-5, tol: float = 1e-4) -> SuiteResult:
    rng = np.random.default_rng(seed)
    result = SuiteResult(tol)
    for _ in range(instances):
        for source in (_op_cases, _supernorm_cases):
            for name, f, x in source(rng):
                report = ad.finite_difference_check(f, x, h=h, tol=tol)
                result.worst[name] = max(result.worst.get(name, 0.0), report.max_rel_error)
    return result
