"""sklearn-compatible GNN estimators with optional SuperNorm layers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import autodiff as ad
from .exceptions import ValidationError
from .graph import Graph, batch, normalized_adjacency
from .layers import LayerStack
from .losses import binary_cross_entropy, cross_entropy, log_softmax
from .metrics import accuracy, roc_auc
from .optim import Adam, ReduceLROnPlateau
from .spectral import FactorConfig, NodeFactors, batch_factors, graph_factors


@dataclass
class GraphInput:
    """Structural side inputs for one forward pass."""

    offsets: np.ndarray
    factors: Optional[NodeFactors]
    a_sym: Optional[np.ndarray] = None
    adjacency: Optional[np.ndarray] = None


def _node_features(graphs) -> np.ndarray:
    feats = [g.features if g.features is not None else np.ones((g.num_nodes, 1)) for g in graphs]
    dims = {f.shape[1] for f in feats}
    if len(dims) > 1:
        raise ValidationError(f"graphs carry different feature dimensions {sorted(dims)}")
    return check_array(np.concatenate(feats, axis=0), dtype=np.float64)


def _check_graphs(X) -> list:
    graphs = list(X)
    if not graphs:
        raise ValidationError("empty list of graphs")
    for i, g in enumerate(graphs):
        if not isinstance(g, Graph):
            raise ValidationError(f"item {i} is {type(g).__name__}, expected Graph")
    return graphs


class _TrainingMixin:
    def _make_model(self, d_in: int, d_out: int, readout: str) -> LayerStack:
        return LayerStack(
            d_in,
            d_out,
            conv=self.conv,
            norm=self.norm,
            num_layers=self.num_layers,
            hidden_dim=self.hidden_dim,
            readout=readout,
            dropout=self.dropout,
            rng=np.random.default_rng(self.random_state),
            freeze_rc=self.freeze_rc,
            freeze_re=self.freeze_re,
        )

    def _factor_config(self) -> FactorConfig:
        return FactorConfig(p=self.p)

    def _weight_log(self) -> dict:
        sn = self.model_.supernorms()
        if not sn:
            return {}
        return {
            "w_rc_abs": float(np.mean([np.abs(s.w_rc.values).mean() for s in sn])),
            "w_re_abs": float(np.mean([np.abs(s.w_re.values).mean() for s in sn])),
        }

    def _recalibrate(self, passes) -> None:
        """Set running statistics to their average over ``passes``.

        Each pass is a callable running one training-mode forward. The
        exponential moving average lags behind the parameters, and with
        near-constant columns (tiny variance) that lag alone can shift
        eval-mode outputs far off; averaging exact per-batch statistics of
        the current parameters removes it. Dropout is off during the passes.
        """
        norms = [n for n in self.model_.norms if n is not None]
        if norms:
            saved, dropout = [n.momentum for n in norms], self.model_.dropout
            sums = [[np.zeros_like(n.running_mean), np.zeros_like(n.running_var)] for n in norms]
            for n in norms:
                n.momentum = 1.0
            self.model_.dropout = 0.0
            self.model_.train()
            count = 0
            for run in passes:
                run()
                count += 1
                for acc, n in zip(sums, norms):
                    acc[0] += n.running_mean
                    acc[1] += n.running_var
            for (mean, var), n, m in zip(sums, norms, saved):
                n.running_mean[...] = mean / count
                n.running_var[...] = var / count
                n.momentum = m
            self.model_.dropout = dropout
        self.model_.eval()

    def _warmup_lr(self, epoch: int, base: float) -> float:
        if self.warmup_epochs and epoch < self.warmup_epochs:
            return base * (epoch + 1) / self.warmup_epochs
        return base


class GraphClassifier(_TrainingMixin, ClassifierMixin, BaseEstimator):
    """Graph-level classifier: conv/norm/ReLU blocks, mean pooling, linear head.

    ``X`` is a list of :class:`~supernorm.graph.Graph`; graphs without
    features get a constant column. Binary targets use one logit and
    binary cross-entropy, more classes use softmax cross-entropy.

    Training uses Adam with a plateau schedule on validation ROC-AUC (or
    accuracy for multi-class) when ``eval_set`` is given, otherwise on the
    training loss. It stops after ``max_epochs`` or once the learning rate
    drops below ``lr_floor``.
    """

    def __init__(
        self,
        conv="mlp",
        norm="supernorm",
        num_layers=1,
        hidden_dim=128,
        lr=1e-3,
        max_epochs=100,
        batch_size=32,
        patience=10,
        lr_floor=1e-5,
        dropout=0.0,
        p=0.05,
        warmup_epochs=0,
        freeze_rc=False,
        freeze_re=False,
        random_state=0,
    ):
        self.conv = conv
        self.norm = norm
        self.num_layers = num_layers
        self.hidden_dim = hidden_dim
        self.lr = lr
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.patience = patience
        self.lr_floor = lr_floor
        self.dropout = dropout
        self.p = p
        self.warmup_epochs = warmup_epochs
        self.freeze_rc = freeze_rc
        self.freeze_re = freeze_re
        self.random_state = random_state

    def _xi(self, graphs) -> list:
        memo: dict = {}
        cfg = self._factor_config()
        return [graph_factors(g, cfg, memo) for g in graphs]

    def _inputs(self, graphs, xi_list):
        b = batch([Graph(g.num_nodes, g.edges) for g in graphs])
        factors = None
        if self.norm == "supernorm":
            factors = NodeFactors.from_xi(np.concatenate(xi_list), b.segment_offsets)
        gi = GraphInput(b.segment_offsets, factors)
        if self.conv == "gcn":
            gi.a_sym = b.block_adjacency("symmetric")
        elif self.conv == "gin":
            gi.adjacency = b.block_adjacency()
        return gi

    def _forward(self, graphs, xi_list):
        x = _node_features(graphs)
        return self.model_.forward(ad.constant(x), self._inputs(graphs, xi_list))

    def _loss(self, logits, y):
        if self.n_classes_ == 2:
            return binary_cross_entropy(logits, y)
        return cross_entropy(logits, y)

    def fit(self, X, y, eval_set=None):
        graphs = _check_graphs(X)
        y = np.asarray(y)
        if len(y) != len(graphs):
            raise ValidationError(f"{len(graphs)} graphs but {len(y)} targets")
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        self.n_classes_ = len(self.classes_)
        if self.n_classes_ < 2:
            raise ValidationError("need at least two classes")
        d_in = _node_features(graphs[:1]).shape[1]
        self.n_features_in_ = d_in
        d_out = 1 if self.n_classes_ == 2 else self.n_classes_
        self.model_ = self._make_model(d_in, d_out, "mean_pool")
        opt = Adam(self.model_.trainable_parameters(), lr=self.lr)
        sched = ReduceLROnPlateau(
            self.lr, patience=self.patience, lr_floor=self.lr_floor, mode="max" if eval_set else "min"
        )
        xi = self._xi(graphs)
        if eval_set is not None:
            valid_graphs = _check_graphs(eval_set[0])
            valid_y = np.searchsorted(self.classes_, np.asarray(eval_set[1]))
            valid_xi = self._xi(valid_graphs)
        rng = np.random.default_rng(self.random_state)
        self.history_ = [dict(epoch=0, lr=self.lr, **self._weight_log())]
        for epoch in range(self.max_epochs):
            opt.lr = self._warmup_lr(epoch, sched.lr)
            self.model_.train()
            order = rng.permutation(len(graphs))
            losses = []
            for start in range(0, len(order), self.batch_size):
                idx = order[start : start + self.batch_size]
                _, logits = self._forward([graphs[i] for i in idx], [xi[i] for i in idx])
                loss = self._loss(logits, y_enc[idx])
                opt.zero_grad()
                ad.backward(loss)
                opt.step()
                losses.append(loss.item())
            self._recalibrate(
                lambda start=start: self._forward(graphs[start : start + self.batch_size], xi[start : start + self.batch_size])
                for start in range(0, len(graphs), self.batch_size)
            )
            record = dict(epoch=epoch + 1, lr=opt.lr, train_loss=float(np.mean(losses)))
            if eval_set is not None:
                record["valid_metric"] = self._metric(valid_graphs, valid_xi, valid_y)
                monitor = record["valid_metric"]
            else:
                monitor = record["train_loss"]
            record.update(self._weight_log())
            self.history_.append(record)
            if epoch >= self.warmup_epochs:
                sched.step(monitor)
                if sched.terminated:
                    break
        self.model_.eval()
        return self

    def _scores(self, graphs, xi_list) -> np.ndarray:
        self.model_.eval()
        out = []
        for start in range(0, len(graphs), max(self.batch_size, 1)):
            sl = slice(start, start + self.batch_size)
            _, logits = self._forward(graphs[sl], xi_list[sl])
            out.append(logits.values)
        return np.concatenate(out, axis=0)

    def _metric(self, graphs, xi_list, y_enc) -> float:
        scores = self._scores(graphs, xi_list)
        if self.n_classes_ == 2:
            if len(np.unique(y_enc)) < 2:
                return accuracy((scores[:, 0] > 0).astype(int), y_enc)
            return roc_auc(scores[:, 0], y_enc)
        return accuracy(scores.argmax(axis=1), y_enc)

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        graphs = _check_graphs(X)
        scores = self._scores(graphs, self._xi(graphs))
        return scores[:, 0] if self.n_classes_ == 2 else scores

    def predict_proba(self, X) -> np.ndarray:
        scores = self.decision_function(X)
        if self.n_classes_ == 2:
            pos = 0.5 * (1.0 + np.tanh(0.5 * scores))
            return np.column_stack([1.0 - pos, pos])
        return np.exp(log_softmax(scores))

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        return self.classes_[proba.argmax(axis=1)]


class NodeClassifier(_TrainingMixin, ClassifierMixin, BaseEstimator):
    """Transductive node classifier on a single graph (full-batch training).

    ``fit(graph, y, train_idx, valid_idx)`` uses only the labels at
    ``train_idx``; ``valid_idx`` drives the plateau schedule. The whole
    graph forms one segment for normalization.
    """

    def __init__(
        self,
        conv="gcn",
        norm="supernorm",
        num_layers=2,
        hidden_dim=128,
        lr=1e-2,
        max_epochs=200,
        patience=15,
        lr_floor=1e-5,
        dropout=0.0,
        p=0.05,
        warmup_epochs=0,
        freeze_rc=False,
        freeze_re=False,
        random_state=0,
    ):
        self.conv = conv
        self.norm = norm
        self.num_layers = num_layers
        self.hidden_dim = hidden_dim
        self.lr = lr
        self.max_epochs = max_epochs
        self.patience = patience
        self.lr_floor = lr_floor
        self.dropout = dropout
        self.p = p
        self.warmup_epochs = warmup_epochs
        self.freeze_rc = freeze_rc
        self.freeze_re = freeze_re
        self.random_state = random_state

    def _inputs(self, graph: Graph) -> GraphInput:
        offsets = np.array([graph.num_nodes], dtype=np.int64)
        factors = None
        if self.norm == "supernorm":
            factors = NodeFactors.from_xi(graph_factors(graph, self._factor_config()), offsets)
        gi = GraphInput(offsets, factors)
        if self.conv == "gcn":
            gi.a_sym = normalized_adjacency(graph, "symmetric")
        elif self.conv == "gin":
            gi.adjacency = graph.adjacency()
        return gi

    def fit(self, X: Graph, y, train_idx=None, valid_idx=None):
        if not isinstance(X, Graph) or X.features is None:
            raise ValidationError("NodeClassifier.fit needs a Graph with node features")
        y = np.asarray(y)
        if len(y) != X.num_nodes:
            raise ValidationError(f"{X.num_nodes} nodes but {len(y)} labels")
        train_idx = np.arange(X.num_nodes) if train_idx is None else np.asarray(train_idx)
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        self.n_classes_ = len(self.classes_)
        x = ad.constant(check_array(X.features, dtype=np.float64))
        self.n_features_in_ = x.cols
        self.model_ = self._make_model(x.cols, self.n_classes_, "none")
        self.inputs_ = self._inputs(X)
        self.factor_checksum_ = self.inputs_.factors.checksum() if self.inputs_.factors else None
        opt = Adam(self.model_.trainable_parameters(), lr=self.lr)
        sched = ReduceLROnPlateau(
            self.lr, patience=self.patience, lr_floor=self.lr_floor, mode="max" if valid_idx is not None else "min"
        )
        self.history_ = [dict(epoch=0, lr=self.lr, **self._weight_log())]
        for epoch in range(self.max_epochs):
            opt.lr = self._warmup_lr(epoch, sched.lr)
            self.model_.train()
            _, logits = self.model_.forward(x, self.inputs_)
            loss = cross_entropy(ad.take_rows(logits, train_idx), y_enc[train_idx])
            opt.zero_grad()
            ad.backward(loss)
            opt.step()
            record = dict(epoch=epoch + 1, lr=opt.lr, train_loss=loss.item())
            monitor = record["train_loss"]
            self._recalibrate([lambda: self.model_.forward(x, self.inputs_)])
            if valid_idx is not None:
                pred = self._logits(x).argmax(axis=1)
                record["valid_metric"] = accuracy(pred[valid_idx], y_enc[valid_idx])
                monitor = record["valid_metric"]
            record.update(self._weight_log())
            self.history_.append(record)
            if epoch >= self.warmup_epochs:
                sched.step(monitor)
                if sched.terminated:
                    break
        self.model_.eval()
        self._x = x
        return self

    def _logits(self, x) -> np.ndarray:
        self.model_.eval()
        return self.model_.forward(x, self.inputs_)[1].values

    def embed(self, X: Graph = None) -> np.ndarray:
        """Hidden representation after the last block (eval mode)."""
        check_is_fitted(self, "model_")
        x = self._x if X is None else ad.constant(X.features)
        inputs = self.inputs_ if X is None else self._inputs(X)
        self.model_.eval()
        return self.model_.forward(x, inputs)[0].values

    def decision_function(self, X: Graph = None) -> np.ndarray:
        check_is_fitted(self, "model_")
        if X is None:
            return self._logits(self._x)
        self.model_.eval()
        return self.model_.forward(ad.constant(X.features), self._inputs(X))[1].values

    def predict(self, X: Graph = None) -> np.ndarray:
        return self.classes_[self.decision_function(X).argmax(axis=1)]


class SubgraphFactorTransformer(TransformerMixin, BaseEstimator):
    """Map a list of graphs to their per-node factor column.

    Stateless apart from the configuration; ``fit`` only validates the
    parameters so the transformer drops into sklearn pipelines.

    Parameters
    ----------
    p : float
        Hash base, in (0, 1).
    eig_quantum : float
        Rounding step applied to eigenvalues before hashing.
    eig_tolerance, max_sweeps :
        Jacobi stopping controls.
    """

    def __init__(self, p=0.05, eig_quantum=1e-6, eig_tolerance=1e-10, max_sweeps=100):
        self.p = p
        self.eig_quantum = eig_quantum
        self.eig_tolerance = eig_tolerance
        self.max_sweeps = max_sweeps

    def _config(self) -> FactorConfig:
        return FactorConfig(self.p, self.eig_quantum, self.eig_tolerance, self.max_sweeps)

    def fit(self, X, y=None):
        self.config_ = self._config()
        return self

    def node_factors(self, X) -> NodeFactors:
        cfg = getattr(self, "config_", None) or self._config()
        return batch_factors(batch(list(X)), cfg)

    def transform(self, X):
        return self.node_factors(X).xi.reshape(-1, 1)
