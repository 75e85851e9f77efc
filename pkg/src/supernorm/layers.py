"""GNN building blocks on top of :mod:`supernorm.autodiff`.

Layers are small parameter containers with a ``__call__`` forward pass.
Blocks follow the conv -> norm -> activation ordering.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import DiffMatrix
from .exceptions import DimensionError, DomainError, ValidationError
from .spectral import NodeFactors


class Module:
    training = True

    def named_parameters(self, prefix: str = ""):
        """Yield ``(name, DiffMatrix)`` for every parameter, depth first."""
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, DiffMatrix) and name in self._param_names():
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def _param_names(self):
        return ()

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def trainable_parameters(self):
        return [p for p in self.parameters() if p.requires_grad]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def children(self):
        for value in vars(self).values():
            if isinstance(value, Module):
                yield value
            elif isinstance(value, list):
                yield from (v for v in value if isinstance(v, Module))

    def train(self, mode: bool = True):
        self.training = mode
        for child in self.children():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def state_dict(self) -> dict:
        state = {name: p.values.copy() for name, p in self.named_parameters()}
        state.update(self._buffers())
        return state

    def _buffers(self, prefix: str = "") -> dict:
        out = {}
        for name in getattr(self, "_buffer_names", ()):
            out[f"{prefix}{name}"] = getattr(self, name).copy()
        for name, value in vars(self).items():
            if isinstance(value, Module):
                out.update(value._buffers(f"{prefix}{name}."))
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item._buffers(f"{prefix}{name}.{i}."))
        return out

    def load_state_dict(self, state: dict) -> None:
        params = dict(self.named_parameters())
        buffers = self._buffers()
        missing = (set(params) | set(buffers)) - set(state)
        if missing:
            raise ValidationError(f"checkpoint lacks entries {sorted(missing)}")
        for name, p in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise DimensionError(f"{name}: checkpoint shape {value.shape} != {p.shape}")
            p.values[...] = value
        for name in buffers:
            owner, attr = self._resolve(name)
            current = getattr(owner, attr)
            current[...] = np.asarray(state[name], dtype=np.float64).reshape(current.shape)

    def _resolve(self, dotted: str):
        parts = dotted.split(".")
        obj = self
        for part in parts[:-1]:
            obj = obj[int(part)] if isinstance(obj, list) else getattr(obj, part)
        return obj, parts[-1]


def glorot(rng: np.random.Generator, d_in: int, d_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-limit, limit, size=(d_in, d_out))


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        self.weight = ad.parameter(glorot(rng, d_in, d_out))
        self.bias = ad.parameter(np.zeros((1, d_out))) if bias else None

    def _param_names(self):
        return ("weight", "bias") if self.bias is not None else ("weight",)

    @property
    def d_out(self) -> int:
        return self.weight.cols

    def __call__(self, h):
        out = ad.matmul(h, self.weight)
        return out + self.bias if self.bias is not None else out


class MLP(Module):
    """Linear -> ReLU -> Linear."""

    def __init__(self, d_in: int, d_hidden: int, d_out: int, rng: np.random.Generator):
        self.layers = [Linear(d_in, d_hidden, rng), Linear(d_hidden, d_out, rng)]

    @property
    def d_out(self) -> int:
        return self.layers[-1].d_out

    def __call__(self, h):
        return self.layers[1](ad.relu(self.layers[0](h)))


def gcn_conv(h, a_sym, w) -> DiffMatrix:
    """``A_sym @ H @ W`` with a constant normalized adjacency."""
    h, w = ad.as_matrix(h), ad.as_matrix(w)
    a_sym = np.asarray(a_sym, dtype=np.float64)
    if a_sym.shape != (h.rows, h.rows) or h.cols != w.rows:
        raise DimensionError(f"gcn_conv: A {a_sym.shape}, H {h.shape}, W {w.shape}")
    return ad.matmul(ad.constant(a_sym), ad.matmul(h, w))


def _adjacency_from(neighbors, n: int) -> np.ndarray:
    if isinstance(neighbors, np.ndarray) and neighbors.ndim == 2:
        if neighbors.shape != (n, n):
            raise DimensionError(f"adjacency shape {neighbors.shape} for {n} rows")
        return neighbors
    a = np.zeros((n, n))
    for v, nbrs in enumerate(neighbors):
        for u in nbrs:
            a[v, u] = 1.0
    return a


def gin_aggregate(h, neighbors, eps_gin: float = 0.0) -> DiffMatrix:
    """``(1 + eps) h_v + sum of neighbour rows``."""
    h = ad.as_matrix(h)
    a = _adjacency_from(neighbors, h.rows)
    return ad.scalar_mul(h, 1.0 + eps_gin) + ad.matmul(ad.constant(a), h)


def gin_conv(h, neighbors, eps_gin: float = 0.0, mlp=None) -> DiffMatrix:
    agg = gin_aggregate(h, neighbors, eps_gin)
    return mlp(agg) if mlp is not None else agg


class GCNConv(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        self.weight = ad.parameter(glorot(rng, d_in, d_out))

    def _param_names(self):
        return ("weight",)

    def __call__(self, h, a_sym):
        return gcn_conv(h, a_sym, self.weight)


class GINConv(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, eps_gin: float = 0.0):
        self.mlp = MLP(d_in, d_out, d_out, rng)
        self.eps_gin = eps_gin

    def __call__(self, h, adjacency):
        return gin_conv(h, adjacency, self.eps_gin, self.mlp)


def _center_scale(h: DiffMatrix, norm: "BatchNorm") -> DiffMatrix:
    """Centering and scaling; updates running statistics in train mode."""
    n = h.rows
    if n < 1:
        raise DimensionError("normalization needs at least one row")
    if norm.training:
        mean = ad.mean_over_rows(h)
        var = ad.var_over_rows(h)
        m = norm.momentum
        norm.running_mean[...] = (1.0 - m) * norm.running_mean + m * mean.values
        norm.running_var[...] = (1.0 - m) * norm.running_var + m * var.values
    else:
        mean = ad.constant(norm.running_mean.copy())
        var = ad.constant(norm.running_var.copy())
    return ad.divide_elementwise(ad.sub(h, mean), ad.sqrt_eps(var, norm.eps))


class BatchNorm(Module):
    """Per-column batch normalization with running statistics.

    Train mode uses the biased batch variance both for scaling and for the
    running average.
    """

    _buffer_names = ("running_mean", "running_var")

    def __init__(self, dim: int, eps: float = 1e-5, momentum: float = 0.1):
        self.gamma = ad.parameter(np.ones((1, dim)))
        self.beta = ad.parameter(np.zeros((1, dim)))
        self.running_mean = np.zeros((1, dim))
        self.running_var = np.ones((1, dim))
        self.eps = eps
        self.momentum = momentum

    def _param_names(self):
        return ("gamma", "beta")

    @property
    def dim(self) -> int:
        return self.gamma.cols

    def __call__(self, h, factors=None):
        return batchnorm(h, self)


def batchnorm(h, st: BatchNorm) -> DiffMatrix:
    h = ad.as_matrix(h)
    return ad.add(ad.hadamard(_center_scale(h, st), st.gamma), st.beta)


class SuperNorm(BatchNorm):
    """Batch normalization with subgraph-factor calibration and enhancement.

    With ``H_SA`` the per-graph mean of ``H``::

        H_RC = H + w_rc * H_SA * m_rc
        H_CS = (H_RC - mean) / sqrt(var + eps)
        out  = H_CS * (gamma + m_re ** w_re) / 2 + beta

    All products are elementwise; ``m_rc`` and ``m_re`` are per-node
    columns repeated over the feature dimension. At initialization
    (``w_rc = w_re = 0``, ``gamma = 1``) the layer equals plain batch norm.
    """

    def __init__(
        self,
        dim: int,
        eps: float = 1e-5,
        momentum: float = 0.1,
        freeze_rc: bool = False,
        freeze_re: bool = False,
    ):
        super().__init__(dim, eps, momentum)
        self.w_rc = DiffMatrix(np.zeros((1, dim)), requires_grad=not freeze_rc)
        self.w_re = DiffMatrix(np.zeros((1, dim)), requires_grad=not freeze_re)

    def _param_names(self):
        return ("gamma", "beta", "w_rc", "w_re")

    def __call__(self, h, factors: Optional[NodeFactors] = None):
        if factors is None:
            raise ValidationError("SuperNorm needs the node factors of the current batch")
        return supernorm(h, factors, factors.segment_offsets, self)


def _tile(column: np.ndarray, d: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(column, dtype=np.float64).reshape(-1, 1), (len(column), d))


def representation_calibration(h, m_rc, w_rc, offsets) -> DiffMatrix:
    h = ad.as_matrix(h)
    h_sa = ad.segment_mean(h, offsets)
    injected = ad.hadamard(h_sa, ad.constant(_tile(m_rc, h.cols)))
    return ad.add(h, ad.hadamard(injected, w_rc))


def enhancement_scale(m_re, w_re, d: int) -> DiffMatrix:
    return ad.elementwise_pow(ad.constant(_tile(m_re, d)), w_re)


def representation_enhancement(h_cs, m_re, w_re) -> DiffMatrix:
    """Standalone enhancement ``H_CS * m_re ** w_re`` (not used by the layer)."""
    h_cs = ad.as_matrix(h_cs)
    return ad.hadamard(h_cs, enhancement_scale(m_re, w_re, h_cs.cols))


def supernorm(h, factors: NodeFactors, offsets, st: SuperNorm) -> DiffMatrix:
    h = ad.as_matrix(h)
    offsets = np.asarray(offsets, dtype=np.int64)
    if len(factors) != h.rows or not np.array_equal(factors.segment_offsets, offsets):
        raise ValidationError(
            f"factors cover {len(factors)} nodes in {len(factors.segment_offsets)} graphs; "
            f"batch has {h.rows} rows in {len(offsets)} graphs"
        )
    if np.any(factors.m_re <= 0):
        raise DomainError("enhancement factors must be strictly positive")
    h_rc = representation_calibration(h, factors.m_rc, st.w_rc, offsets)
    h_cs = _center_scale(h_rc, st)
    p = enhancement_scale(factors.m_re, st.w_re, h.cols)
    scale = ad.scalar_mul(ad.add(p, st.gamma), 0.5)
    return ad.add(ad.hadamard(h_cs, scale), st.beta)


def pooling_matrix(offsets) -> np.ndarray:
    offsets = np.asarray(offsets, dtype=np.int64)
    starts = np.concatenate([[0], offsets[:-1]])
    pool = np.zeros((len(offsets), int(offsets[-1]) if len(offsets) else 0))
    for i, (s, e) in enumerate(zip(starts, offsets)):
        pool[i, s:e] = 1.0 / (e - s)
    return pool


def mean_pool_readout(h, offsets) -> DiffMatrix:
    return ad.matmul(ad.constant(pooling_matrix(offsets)), ad.as_matrix(h))


def make_norm(kind: str, dim: int, freeze_rc: bool = False, freeze_re: bool = False):
    if kind == "none":
        return None
    if kind == "batchnorm":
        return BatchNorm(dim)
    if kind == "supernorm":
        return SuperNorm(dim, freeze_rc=freeze_rc, freeze_re=freeze_re)
    raise ValueError(f"unknown normalization {kind!r}")


class LayerStack(Module):
    """Stack of conv -> norm -> ReLU blocks with an optional mean-pool readout.

    ``conv`` is ``"mlp"`` (node-wise linear map), ``"gcn"`` or ``"gin"``.
    ``forward`` returns the last hidden representation and the head output.
    """

    def __init__(
        self,
        d_in: int,
        d_out: int,
        conv: str = "gcn",
        norm: str = "batchnorm",
        num_layers: int = 1,
        hidden_dim: int = 128,
        readout: str = "mean_pool",
        dropout: float = 0.0,
        rng: Optional[np.random.Generator] = None,
        freeze_rc: bool = False,
        freeze_re: bool = False,
    ):
        if conv not in ("mlp", "gcn", "gin"):
            raise ValueError(f"unknown conv {conv!r}")
        if readout not in ("mean_pool", "none"):
            raise ValueError(f"unknown readout {readout!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.conv_kind = conv
        self.norm_kind = norm
        self.readout = readout
        self.dropout = dropout
        self.convs, self.norms = [], []
        d = d_in
        for _ in range(num_layers):
            if conv == "mlp":
                self.convs.append(Linear(d, hidden_dim, rng))
            elif conv == "gcn":
                self.convs.append(GCNConv(d, hidden_dim, rng))
            else:
                self.convs.append(GINConv(d, hidden_dim, rng))
            self.norms.append(make_norm(norm, hidden_dim, freeze_rc, freeze_re))
            d = hidden_dim
        self.head = Linear(d, d_out, rng)
        self._dropout_rng = np.random.default_rng(rng.integers(2**63))

    def children(self):
        yield from self.convs
        yield from (n for n in self.norms if n is not None)
        yield self.head

    def named_parameters(self, prefix: str = ""):
        for i, c in enumerate(self.convs):
            yield from c.named_parameters(f"{prefix}conv{i}.")
        for i, n in enumerate(self.norms):
            if n is not None:
                yield from n.named_parameters(f"{prefix}norm{i}.")
        yield from self.head.named_parameters(f"{prefix}head.")

    def _buffers(self, prefix: str = "") -> dict:
        out = {}
        for i, n in enumerate(self.norms):
            if n is not None:
                out.update(n._buffers(f"{prefix}norm{i}."))
        return out

    def _resolve(self, dotted: str):
        head, rest = dotted.split(".", 1)
        owner = self.norms[int(head[len("norm"):])]
        return owner._resolve(rest)

    def supernorms(self):
        return [n for n in self.norms if isinstance(n, SuperNorm)]

    def _drop(self, h: DiffMatrix) -> DiffMatrix:
        if not self.training or self.dropout <= 0.0:
            return h
        keep = 1.0 - self.dropout
        mask = (self._dropout_rng.random(h.shape) < keep) / keep
        return ad.hadamard(h, ad.constant(mask))

    def forward(self, x, graph_input):
        """Run the stack.

        ``graph_input`` supplies ``a_sym`` (GCN), ``adjacency`` (GIN),
        ``factors`` (SuperNorm) and ``offsets`` (readout) as attributes.
        """
        h = ad.as_matrix(x)
        for conv, norm in zip(self.convs, self.norms):
            h = self._drop(h)
            if self.conv_kind == "mlp":
                h = conv(h)
            elif self.conv_kind == "gcn":
                h = conv(h, graph_input.a_sym)
            else:
                h = conv(h, graph_input.adjacency)
            if norm is not None:
                h = norm(h, graph_input.factors)
            h = ad.relu(h)
        hidden = h
        if self.readout == "mean_pool":
            h = mean_pool_readout(h, graph_input.offsets)
        return hidden, self.head(h)

    def __call__(self, x, graph_input):
        return self.forward(x, graph_input)[1]
