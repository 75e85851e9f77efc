"""Executable checks of the calibration identities and separation margins.

The margin checks draw random instances that satisfy the stated
preconditions and evaluate the transformed rows exactly as written, with
every product taken elementwise (the layer's semantics). They report
violations instead of asserting, so callers decide what counts as failure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .layers import representation_calibration


def centering_residual(h, m_rc, w_rc, offsets) -> float:
    """Max deviation of ``center(H_RC) - center(H)`` from ``center(delta)``.

    ``delta = w_rc * H_SA * m_rc`` is the injected term; the identity is
    exact for any segment layout.
    """
    h = np.asarray(h, dtype=np.float64)
    w_rc = np.asarray(w_rc, dtype=np.float64).reshape(1, -1)
    h_rc = representation_calibration(ad.constant(h), m_rc, ad.constant(w_rc), offsets).values
    h_sa = ad.segment_mean(ad.constant(h), offsets).values
    delta = w_rc * h_sa * np.asarray(m_rc, dtype=np.float64).reshape(-1, 1)
    lhs = (h_rc - h_rc.mean(axis=0)) - (h - h.mean(axis=0))
    rhs = delta - delta.mean(axis=0)
    return float(np.abs(lhs - rhs).max())


def _unit(x):
    return x / np.linalg.norm(x)


def _near_unit(rng, h_u, eps):
    """A unit vector within distance ``eps`` of the unit vector ``h_u``."""
    while True:
        step = rng.normal(size=h_u.shape)
        h_v = _unit(h_u + rng.uniform(0.0, 1.0) * eps * _unit(step))
        if np.linalg.norm(h_u - h_v) <= eps:
            return h_v


@dataclass
class MarginReport:
    trials: int
    violations: int
    worst_margin: float
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.violations == 0


def rc_margin_trials(trials: int = 200, seed: int = 0, tol: float = 1e-9) -> MarginReport:
    """Separation of two near-identical rows by calibration.

    Preconditions drawn per trial: unit rows with ``|H_u - H_v| <= eps``,
    ``|w_rc| >= c1`` and ``|(m 1^T)_u - (m 1^T)_v| >= 2 eps / c1``. The
    rows compared are ``H_x + (w_rc * m_x) * (H_u + H_v) / 2``. ``eps`` is
    capped at 0.5 so trials stay in the near-identical regime.
    """
    rng = np.random.default_rng(seed)
    worst, failures = np.inf, []
    for t in range(trials):
        d = int(rng.integers(2, 17))
        w = rng.normal(size=d)
        c1 = np.linalg.norm(w) * rng.uniform(0.5, 1.0)
        m_u, m_v = rng.uniform(0.01, 1.0, size=2)
        gap = abs(m_u - m_v) * np.sqrt(d)
        eps = min(gap * c1 / 2.0, 0.5) * rng.uniform(0.05, 1.0)
        h_u = _unit(rng.normal(size=d))
        h_v = _near_unit(rng, h_u, eps)
        mid = (h_u + h_v) / 2.0
        r_u = h_u + w * m_u * mid
        r_v = h_v + w * m_v * mid
        margin = float(np.linalg.norm(r_u - r_v) - eps)
        worst = min(worst, margin)
        if margin < -tol:
            failures.append(dict(trial=t, d=d, eps=float(eps), margin=margin))
    return MarginReport(trials, len(failures), float(worst), failures)


def re_margin_trials(trials: int = 200, seed: int = 0, tol: float = 1e-9) -> MarginReport:
    """Separation of two near-identical rows by the enhancement scale.

    With ``P_x = m_x ** w_re`` (elementwise), preconditions are
    ``|P_u| <= c2`` and ``|P_u - P_v| >= (1 + c2) eps``; the rows compared
    are ``P_u * H_u`` and ``P_v * H_v``.
    """
    rng = np.random.default_rng(seed)
    worst, failures = np.inf, []
    for t in range(trials):
        d = int(rng.integers(2, 17))
        w_re = rng.normal(size=d)
        m_u, m_v = rng.uniform(0.01, 1.0, size=2)
        p_u, p_v = m_u**w_re, m_v**w_re
        c2 = np.linalg.norm(p_u) * rng.uniform(1.0, 1.5)
        eps = min(np.linalg.norm(p_u - p_v) / (1.0 + c2), 0.5) * rng.uniform(0.05, 1.0)
        h_u = _unit(rng.normal(size=d))
        h_v = _near_unit(rng, h_u, eps)
        margin = float(np.linalg.norm(p_u * h_u - p_v * h_v) - eps)
        worst = min(worst, margin)
        if margin < -tol:
            failures.append(dict(trial=t, d=d, eps=float(eps), margin=margin))
    return MarginReport(trials, len(failures), float(worst), failures)
