import numpy as np
import pytest

from supernorm import autodiff as ad
from supernorm.exceptions import DimensionError, DomainError, ValidationError
from supernorm.graph import batch, complete_graph, cycle_graph, normalized_adjacency, path_graph, star_graph
from supernorm.layers import (
    MLP,
    BatchNorm,
    GINConv,
    LayerStack,
    Linear,
    SuperNorm,
    batchnorm,
    gcn_conv,
    gin_aggregate,
    make_norm,
    mean_pool_readout,
    representation_enhancement,
    supernorm,
)
from supernorm.spectral import NodeFactors, batch_factors


def _batch_inputs(rng, d=4):
    b = batch([cycle_graph(5), star_graph(3), complete_graph(3)])
    return b, batch_factors(b), rng.normal(size=(b.n_total, d))


class TestConvolutions:
    def test_gcn_on_constant_features(self):
        g = path_graph(3)
        h = np.ones((3, 1))
        out = gcn_conv(ad.constant(h), normalized_adjacency(g), ad.constant([[1.0]])).values.ravel()
        a = normalized_adjacency(g)
        np.testing.assert_allclose(out, a.sum(axis=1))

    def test_gcn_shape_check(self):
        with pytest.raises(DimensionError):
            gcn_conv(ad.constant(np.ones((3, 2))), np.eye(2), ad.constant(np.ones((2, 2))))

    def test_gin_aggregate_lists_and_dense_agree(self):
        g = star_graph(3)
        h = ad.constant(np.arange(8.0).reshape(4, 2))
        a = gin_aggregate(h, g.neighbors(), 0.5).values
        b = gin_aggregate(h, g.adjacency(), 0.5).values
        np.testing.assert_allclose(a, b)
        np.testing.assert_allclose(a[0], 1.5 * h.values[0] + h.values[1:].sum(axis=0))

    def test_gin_conv_module_params(self, rng):
        conv = GINConv(2, 3, rng)
        assert len(conv.parameters()) == 4

    def test_mlp_output_shape(self, rng):
        assert MLP(3, 5, 2, rng)(ad.constant(np.ones((4, 3)))).shape == (4, 2)


class TestBatchNorm:
    def test_train_mode_standardizes(self, rng):
        h = rng.normal(3.0, 2.0, size=(50, 3))
        out = batchnorm(ad.constant(h), BatchNorm(3)).values
        np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.var(axis=0), 1.0, atol=1e-4)

    def test_running_stats_update(self):
        bn = BatchNorm(1)
        batchnorm(ad.constant([[1.0], [3.0]]), bn)
        assert bn.running_mean.item() == pytest.approx(0.2)
        assert bn.running_var.item() == pytest.approx(0.9 + 0.1 * 1.0)

    def test_eval_uses_running_stats(self):
        bn = BatchNorm(1)
        bn.running_mean[...] = 2.0
        bn.running_var[...] = 4.0 - bn.eps
        bn.eval()
        assert batchnorm(ad.constant([[6.0]]), bn).item() == pytest.approx(2.0)

    def test_state_dict_roundtrip(self):
        bn = BatchNorm(2)
        bn.gamma.values[...] = 3.0
        bn.running_var[...] = 7.0
        other = BatchNorm(2)
        other.load_state_dict(bn.state_dict())
        assert other.gamma.values.tolist() == [[3.0, 3.0]]
        assert other.running_var.tolist() == [[7.0, 7.0]]


class TestSuperNorm:
    def test_init_equals_batchnorm(self, rng):
        b, f, h = _batch_inputs(rng)
        sn, bn = SuperNorm(4), BatchNorm(4)
        np.testing.assert_allclose(
            supernorm(ad.constant(h), f, b.segment_offsets, sn).values,
            batchnorm(ad.constant(h), bn).values,
            atol=1e-12,
        )

    def test_manual_formula(self, rng):
        b, f, h = _batch_inputs(rng, d=3)
        sn = SuperNorm(3)
        sn.w_rc.values[...] = [[0.3, -0.2, 1.0]]
        sn.w_re.values[...] = [[0.5, 0.1, -0.4]]
        sn.gamma.values[...] = [[1.2, 0.8, 1.0]]
        sn.beta.values[...] = [[0.1, 0.0, -0.3]]
        out = supernorm(ad.constant(h), f, b.segment_offsets, sn).values
        h_sa = np.zeros_like(h)
        for i in range(b.num_graphs):
            s = b.segment(i)
            h_sa[s] = h[s].mean(axis=0)
        h_rc = h + sn.w_rc.values * h_sa * f.m_rc[:, None]
        h_cs = (h_rc - h_rc.mean(axis=0)) / np.sqrt(h_rc.var(axis=0) + 1e-5)
        scale = (sn.gamma.values + f.m_re[:, None] ** sn.w_re.values) / 2.0
        np.testing.assert_allclose(out, h_cs * scale + sn.beta.values, atol=1e-12)

    def test_factor_length_mismatch(self, rng):
        b, f, h = _batch_inputs(rng)
        with pytest.raises(ValidationError):
            supernorm(ad.constant(h[:-1]), f, b.segment_offsets, SuperNorm(4))

    def test_needs_factors(self, rng):
        with pytest.raises(ValidationError):
            SuperNorm(2)(ad.constant(np.ones((3, 2))), None)

    def test_nonpositive_enhancement_factor(self):
        f = NodeFactors(np.ones(2), np.ones(2), np.ones(2), np.array([0.5, 0.0]), np.array([2]))
        with pytest.raises(DomainError):
            supernorm(ad.constant(np.ones((2, 1))), f, [2], SuperNorm(1))

    def test_frozen_components_not_trainable(self):
        sn = SuperNorm(2, freeze_rc=True)
        names = [id(p) for p in sn.trainable_parameters()]
        assert id(sn.w_rc) not in names and id(sn.w_re) in names

    def test_standalone_enhancement(self):
        out = representation_enhancement(ad.constant([[2.0]]), np.array([4.0]), ad.constant([[0.5]]))
        assert out.item() == pytest.approx(4.0)


class TestLayerStack:
    def test_forward_shapes_and_names(self, rng):
        b, f, h = _batch_inputs(rng, d=2)

        class Inputs:
            offsets = b.segment_offsets
            factors = f
            a_sym = b.block_adjacency("symmetric")
            adjacency = b.block_adjacency()

        for conv in ("mlp", "gcn", "gin"):
            stack = LayerStack(2, 1, conv=conv, norm="supernorm", num_layers=2, hidden_dim=8, rng=rng)
            hidden, out = stack.forward(ad.constant(h), Inputs)
            assert hidden.shape == (b.n_total, 8) and out.shape == (3, 1)
        names = [n for n, _ in stack.named_parameters()]
        assert "norm1.w_re" in names and names[-1] == "head.bias"
        assert len(stack.supernorms()) == 2

    def test_state_dict_includes_buffers(self, rng):
        stack = LayerStack(2, 1, conv="mlp", norm="batchnorm", num_layers=1, hidden_dim=4, rng=rng)
        state = stack.state_dict()
        assert "norm0.running_mean" in state
        clone = LayerStack(2, 1, conv="mlp", norm="batchnorm", num_layers=1, hidden_dim=4,
                           rng=np.random.default_rng(99))
        clone.load_state_dict(state)
        for k, v in clone.state_dict().items():
            np.testing.assert_array_equal(v, state[k])

    def test_missing_checkpoint_entry(self, rng):
        stack = LayerStack(2, 1, conv="mlp", norm="none", hidden_dim=4, rng=rng)
        with pytest.raises(ValidationError):
            stack.load_state_dict({})

    def test_unknown_kinds(self):
        with pytest.raises(ValueError):
            LayerStack(2, 1, conv="gat")
        with pytest.raises(ValueError):
            make_norm("layernorm", 3)

    def test_mean_pool(self):
        out = mean_pool_readout(ad.constant([[1.0], [3.0], [5.0]]), [2, 3])
        assert out.values.ravel().tolist() == [2.0, 5.0]

    def test_linear_without_bias(self, rng):
        lin = Linear(2, 3, rng, bias=False)
        assert [n for n, _ in lin.named_parameters()] == ["weight"]
