"""Subgraph-specific factors from neighborhood-subgraph spectra.

Every node ``v`` gets a scalar

    xi(v) = ployhash([density(S_v), |S_v|, ployhash(eig(S_v), p)], p)

where ``S_v`` is the subgraph induced by ``v`` and its neighbours and the
eigenvalues are those of its (unaugmented) adjacency, sorted ascending and
rounded to a fixed quantum. Batch-level derivatives of ``xi`` drive the
calibration and enhancement steps of :class:`supernorm.layers.SuperNorm`.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import ConfigurationError, ConvergenceError, ParameterError, ValidationError
from .graph import BatchedGraphs, Graph, density, neighborhood_subgraph


@dataclass(frozen=True)
class FactorConfig:
    p: float = 0.05
    eig_quantum: float = 1e-6
    eig_tolerance: float = 1e-10
    max_sweeps: int = 100

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ParameterError(f"hash base p must lie in (0, 1), got {self.p}")
        if self.eig_quantum <= 0 or self.eig_tolerance <= 0:
            raise ParameterError("eig_quantum and eig_tolerance must be positive")
        if self.max_sweeps < 1:
            raise ParameterError("max_sweeps must be at least 1")


def symmetric_eigenvalues(a, cfg: FactorConfig = FactorConfig()) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.

    Sweeps stop once the off-diagonal Frobenius norm drops below
    ``cfg.eig_tolerance``.
    """
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-9):
        raise ValidationError("matrix is not symmetric within 1e-9")
    n = a.shape[0]
    a = 0.5 * (a + a.T)
    if n <= 1:
        return np.diag(a).copy()

    off_mask = ~np.eye(n, dtype=bool)

    def off_norm(m):
        return math.sqrt(float(np.sum(m[off_mask] ** 2)))

    for _ in range(cfg.max_sweeps):
        if off_norm(a) < cfg.eig_tolerance:
            return np.sort(np.diag(a))
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(apq) < 1e-18 * abs(diff):
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                a[p, q] = a[q, p] = 0.0
    if off_norm(a) < cfg.eig_tolerance:
        return np.sort(np.diag(a))
    raise ConvergenceError(f"Jacobi iteration did not converge in {cfg.max_sweeps} sweeps")


def ployhash(values: Sequence[float], p: float) -> float:
    """Polynomial rolling hash ``sum(values[i] * p**i)``."""
    acc = 0.0
    for s in reversed(list(values)):
        acc = acc * p + float(s)
    return acc


def quantize(values: np.ndarray, quantum: float) -> np.ndarray:
    # "+ 0.0" folds -0.0 into 0.0
    return np.round(np.asarray(values) / quantum) * quantum + 0.0


def spectrum(g: Graph, cfg: FactorConfig = FactorConfig()) -> np.ndarray:
    """Quantized ascending adjacency spectrum of ``g``."""
    return quantize(symmetric_eigenvalues(g.adjacency(), cfg), cfg.eig_quantum)


def _factor_of_subgraph(s: Graph, cfg: FactorConfig) -> float:
    psi = ployhash(spectrum(s, cfg), cfg.p)
    xi = ployhash([density(s), float(s.num_nodes), psi], cfg.p)
    if not xi > 0.0:
        raise ConfigurationError(
            f"nonpositive factor {xi!r} for a {s.num_nodes}-node subgraph; use a smaller p"
        )
    return xi


def subgraph_factor(g: Graph, v: int, cfg: FactorConfig = FactorConfig()) -> float:
    return _factor_of_subgraph(neighborhood_subgraph(g, v), cfg)


def graph_factors(g: Graph, cfg: FactorConfig = FactorConfig(), _memo=None) -> np.ndarray:
    """``xi`` for every node of ``g``."""
    memo = {} if _memo is None else _memo
    out = np.empty(g.num_nodes)
    for v in range(g.num_nodes):
        s = neighborhood_subgraph(g, v)
        key = (s.num_nodes, s.edges)
        if key not in memo:
            memo[key] = _factor_of_subgraph(s, cfg)
        out[v] = memo[key]
    return out


def segment_sum_normalize(values: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    out = np.empty_like(values)
    start = 0
    for end in offsets:
        seg = values[start:end]
        out[start:end] = seg / seg.sum()
        start = end
    return out


@dataclass(frozen=True)
class NodeFactors:
    """Per-node factor vectors for one batch.

    ``m_sn`` is ``xi`` normalized to sum 1 inside each graph, ``m_rc`` is
    ``m_sn * xi`` and ``m_re`` is ``m_rc`` normalized per graph again.
    """

    xi: np.ndarray
    m_sn: np.ndarray
    m_rc: np.ndarray
    m_re: np.ndarray
    segment_offsets: np.ndarray

    @classmethod
    def from_xi(cls, xi, segment_offsets) -> "NodeFactors":
        xi = np.asarray(xi, dtype=np.float64)
        offsets = np.asarray(segment_offsets, dtype=np.int64)
        if len(offsets) and offsets[-1] != len(xi):
            raise ValidationError("segment offsets do not cover the factor vector")
        if np.any(xi <= 0):
            raise ConfigurationError("all factors must be strictly positive")
        m_sn = segment_sum_normalize(xi, offsets)
        m_rc = m_sn * xi
        m_re = segment_sum_normalize(m_rc, offsets)
        return cls(xi, m_sn, m_rc, m_re, offsets)

    def __len__(self):
        return len(self.xi)

    def checksum(self) -> str:
        h = hashlib.sha256()
        for arr in (self.xi, self.m_sn, self.m_rc, self.m_re, self.segment_offsets):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def batch_factors(b: BatchedGraphs, cfg: FactorConfig = FactorConfig()) -> NodeFactors:
    memo: dict = {}
    xi = np.concatenate([graph_factors(g, cfg, memo) for g in b.graphs]) if b.graphs else np.empty(0)
    return NodeFactors.from_xi(xi, b.segment_offsets)
