import numpy as np

from supernorm.graph import Graph, batch
from supernorm.properties import centering_residual, rc_margin_trials, re_margin_trials
from supernorm.spectral import batch_factors


def test_centering_identity_on_random_batches():
    rng = np.random.default_rng(0)
    for _ in range(20):
        graphs = []
        for _ in range(int(rng.integers(1, 5))):
            k = int(rng.integers(1, 8))
            graphs.append(Graph(k, np.argwhere(np.triu(rng.random((k, k)) < 0.4, 1)).tolist()))
        b = batch(graphs)
        f = batch_factors(b)
        h = rng.normal(size=(b.n_total, 3))
        assert centering_residual(h, f.m_rc, rng.normal(size=3), b.segment_offsets) < 1e-10


def test_margin_reports_are_well_formed():
    for fn in (rc_margin_trials, re_margin_trials):
        rep = fn(trials=20, seed=1)
        assert rep.trials == 20
        assert rep.violations == len(rep.failures)
        assert rep.passed == (rep.violations == 0)
        assert np.isfinite(rep.worst_margin)


def test_margin_trials_deterministic():
    assert rc_margin_trials(30, seed=4).failures == rc_margin_trials(30, seed=4).failures
