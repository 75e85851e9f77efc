import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from supernorm import autodiff as ad
from supernorm.exceptions import MetricError
from supernorm.metrics import accuracy, class_distances, roc_auc, roc_auc_bruteforce
from supernorm.optim import SGD, Adam, ReduceLROnPlateau, reduce_lr_on_plateau


def _bowl(x):
    target = ad.constant([[1.0, -2.0, 0.5]])
    d = ad.sub(x, target)
    return ad.sum_all(ad.hadamard(d, d))


class TestOptimizers:
    def test_sgd_zero_grad_no_change(self):
        x = ad.parameter([[1.0, 2.0]])
        x.grad = np.zeros((1, 2))
        SGD([x], lr=0.1).step()
        assert x.values.tolist() == [[1.0, 2.0]]

    def test_adam_zero_grad_first_step(self):
        x = ad.parameter([[1.0, 2.0]])
        x.grad = np.zeros((1, 2))
        Adam([x]).step()
        assert x.values.tolist() == [[1.0, 2.0]]

    def test_sgd_monotone_on_bowl(self):
        x = ad.parameter(np.zeros((1, 3)))
        opt = SGD([x], lr=0.05)
        losses = []
        for _ in range(200):
            opt.zero_grad()
            loss = _bowl(x)
            ad.backward(loss)
            opt.step()
            losses.append(loss.item())
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_adam_converges_on_bowl(self):
        x = ad.parameter(np.zeros((1, 3)))
        opt = Adam([x], lr=0.05)
        for _ in range(500):
            opt.zero_grad()
            ad.backward(_bowl(x))
            opt.step()
        assert _bowl(x).item() < 1e-4

    def test_frozen_parameter_untouched(self):
        x = ad.DiffMatrix([[1.0]], requires_grad=False)
        x.grad = np.ones((1, 1))
        Adam([x]).step()
        assert x.item() == 1.0


class TestPlateau:
    def test_improving_keeps_lr(self):
        assert reduce_lr_on_plateau([0.1, 0.2, 0.3, 0.4], 1e-3, patience=2) == (1e-3, False)

    def test_flat_history_halves_once(self):
        lr, done = reduce_lr_on_plateau([0.5] * 11, 1e-3, patience=10)
        assert lr == pytest.approx(5e-4) and not done

    def test_terminates_below_floor(self):
        lr, done = reduce_lr_on_plateau([0.5, 0.5], 1.5e-5, patience=1)
        assert lr == pytest.approx(0.75e-5) and done

    def test_min_mode(self):
        s = ReduceLROnPlateau(1.0, patience=1, mode="min")
        s.step(1.0)
        s.step(2.0)
        assert s.lr == 0.5

    def test_validation(self):
        with pytest.raises(ValueError):
            ReduceLROnPlateau(1.0, patience=0)


class TestRocAuc:
    def test_examples(self):
        assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
        assert roc_auc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0
        assert roc_auc([1, 2, 3, 4], [0, 1, 0, 1]) == 0.75

    def test_ties_count_half(self):
        assert roc_auc([1.0, 1.0], [0, 1]) == 0.5

    def test_single_class(self):
        with pytest.raises(MetricError):
            roc_auc([1, 2], [1, 1])

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 200), st.integers(0, 2**31), st.booleans())
    def test_matches_bruteforce_exactly(self, n, seed, coarse):
        r = np.random.default_rng(seed)
        y = r.integers(0, 2, size=n)
        y[0], y[1] = 0, 1
        s = r.integers(0, 5, size=n).astype(float) if coarse else r.normal(size=n)
        assert roc_auc(s, y) == roc_auc_bruteforce(s, y)


class TestDistances:
    def test_identical_points(self):
        assert class_distances(np.zeros((4, 2)), [0, 0, 1, 1]) == (0.0, 0.0)

    def test_two_points(self):
        assert class_distances([[0.0, 0.0], [1.0, 0.0]], [0, 1]) == (0.0, 1.0)

    def test_hand_example(self):
        x = [[0, 0], [2, 0], [0, 2], [2, 2]]
        assert class_distances(x, [0, 0, 1, 1]) == (1.0, 2.0)

    def test_needs_two_classes(self):
        with pytest.raises(MetricError):
            class_distances(np.zeros((3, 2)), [1, 1, 1])

    def test_three_classes_mean_pairwise(self):
        x = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]])
        _, inter = class_distances(x, [0, 1, 2])
        assert inter == pytest.approx((3 + 4 + 5) / 3)


def test_accuracy():
    assert accuracy([1, 0, 1], [1, 1, 1]) == pytest.approx(2 / 3)
