"""Desk-scale experiment pipelines with deterministic metric reports.

Each pipeline returns an :class:`ExperimentReport` holding long-format
metric rows (one per ``experiment, model, norm, depth, seed, epoch, split,
metric``) and a JSON-ready summary. Nothing time- or host-dependent enters
either, so repeated runs with the same configuration serialize to
identical bytes.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .data import hierarchical_split, regular_triangle_dataset, sbm_node_dataset
from .estimators import GraphClassifier, NodeClassifier
from .exceptions import ParameterError, RetryError
from .graph import batch
from .io import write_json, write_metrics_csv
from .metrics import accuracy, class_distances, roc_auc
from .spectral import FactorConfig, batch_factors


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    plateau_patience: int = 10
    lr_floor: float = 1e-5
    batch_size: int = 32
    max_epochs: int = 30
    seed: int = 0
    hidden_dim: int = 128
    dropout: float = 0.0
    warmup_epochs: int = 0

    def __post_init__(self):
        if not self.lr_floor < self.lr:
            raise ParameterError(f"lr_floor {self.lr_floor} must be below lr {self.lr}")
        if self.plateau_patience < 1:
            raise ParameterError("plateau_patience must be at least 1")
        if self.batch_size < 1 or self.max_epochs < 1 or self.hidden_dim < 1:
            raise ParameterError("batch_size, max_epochs and hidden_dim must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ParameterError("dropout must lie in [0, 1)")


NODE_TRAIN_DEFAULTS = dict(lr=1e-2, plateau_patience=15, max_epochs=100, hidden_dim=32)


@dataclass(frozen=True)
class RegularGraphConfig:
    """Regular-graph triangle task; also used by the ablation."""

    train: TrainConfig = field(default_factory=TrainConfig)
    num_graphs: int = 600
    n: int = 12
    k: int = 3
    valid_frac: float = 1.0 / 6.0
    test_frac: float = 1.0 / 6.0
    seeds: int = 5
    p: float = 0.05


@dataclass(frozen=True)
class OversmoothingConfig:
    train: TrainConfig = field(default_factory=lambda: TrainConfig(**NODE_TRAIN_DEFAULTS))
    depths: tuple = (2, 4, 6, 8, 10, 12, 14, 16)
    block_sizes: tuple = (100, 100)
    p_in: tuple = (0.2, 0.05)
    p_out: float = 0.03
    feature_dim: int = 16
    signal: float = 0.5
    train_per_class: int = 20
    valid_frac: float = 0.2
    seeds: int = 5
    p: float = 0.01


_EXPERIMENT_CONFIGS = {
    "regular": (RegularGraphConfig, {}),
    "ablation": (RegularGraphConfig, {}),
    "oversmoothing": (OversmoothingConfig, NODE_TRAIN_DEFAULTS),
}


def _coerce_field(name: str, default, value):
    if isinstance(default, tuple):
        items = value if isinstance(value, (list, tuple)) else str(value).split(",")
        cast = type(default[0]) if default else float
        try:
            return tuple(cast(v) for v in items)
        except ValueError:
            raise ParameterError(f"{name}: cannot read {value!r} as a list of {cast.__name__}") from None
    if isinstance(default, bool) or not isinstance(default, (int, float)):
        return value
    if isinstance(default, int) and not (isinstance(value, int) and not isinstance(value, bool)):
        raise ParameterError(f"{name}: expected an integer, got {value!r}")
    if isinstance(default, float) and (isinstance(value, bool) or not isinstance(value, (int, float))):
        raise ParameterError(f"{name}: expected a number, got {value!r}")
    return type(default)(value)


def load_config(experiment: str, values: Mapping = None, seed: int = None):
    """Build the configuration of ``experiment`` from a flat key/value mapping.

    Keys naming :class:`TrainConfig` fields go to the training block, the
    rest to the experiment; unknown keys are rejected. ``seed`` (e.g. from
    the command line) overrides any seed in ``values``.
    """
    if experiment not in _EXPERIMENT_CONFIGS:
        raise ParameterError(f"unknown experiment {experiment!r}; choose from {sorted(_EXPERIMENT_CONFIGS)}")
    cls, train_defaults = _EXPERIMENT_CONFIGS[experiment]
    values = dict(values or {})
    if seed is not None:
        values["seed"] = seed
    train_fields = {f.name: f.default for f in dataclasses.fields(TrainConfig)}
    train_fields.update(train_defaults)
    exp_defaults = {f.name: getattr(cls(), f.name) for f in dataclasses.fields(cls) if f.name != "train"}
    unknown = set(values) - set(train_fields) - set(exp_defaults)
    if unknown:
        raise ParameterError(f"unknown config keys for {experiment}: {sorted(unknown)}")
    train = {k: _coerce_field(k, train_fields[k], values.get(k, train_fields[k])) for k in train_fields}
    rest = {k: _coerce_field(k, exp_defaults[k], values[k]) for k in exp_defaults if k in values}
    return cls(train=TrainConfig(**train), **rest)


def config_dict(cfg) -> dict:
    out = dataclasses.asdict(cfg)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}


@dataclass
class ExperimentReport:
    experiment: str
    rows: list
    summary: dict

    def write(self, out_dir) -> tuple:
        """Write ``<experiment>_metrics.csv`` and ``<experiment>_summary.json``."""
        out_dir = Path(out_dir)
        csv_path = out_dir / f"{self.experiment}_metrics.csv"
        json_path = out_dir / f"{self.experiment}_summary.json"
        write_metrics_csv(self.rows, csv_path)
        write_json(self.summary, json_path)
        return csv_path, json_path


@dataclass
class OversmoothingReport(ExperimentReport):
    """Per-depth means over seeds, keyed by normalization."""

    depths: tuple = ()
    accuracy: dict = field(default_factory=dict)
    intra: dict = field(default_factory=dict)
    inter: dict = field(default_factory=dict)

    def __post_init__(self):
        for table in (self.intra, self.inter):
            for values in table.values():
                if any(v < 0 for v in values):
                    raise ValueError("class distances must be non-negative")


def _stats(values) -> dict:
    v = np.asarray(values, dtype=np.float64)
    return {"mean": float(v.mean()), "std": float(v.std()), "values": [float(x) for x in v]}


def _history_rows(experiment, model, norm, depth, seed, history):
    rows = []
    for rec in history:
        for metric in ("lr", "train_loss", "w_rc_abs", "w_re_abs"):
            if metric in rec:
                rows.append(dict(experiment=experiment, model=model, norm=norm, depth=depth, seed=seed,
                                 epoch=rec["epoch"], split="train", metric=metric, value=float(rec[metric])))
        if "valid_metric" in rec:
            rows.append(dict(experiment=experiment, model=model, norm=norm, depth=depth, seed=seed,
                             epoch=rec["epoch"], split="valid", metric="valid_metric", value=float(rec["valid_metric"])))
    return rows


def _regular_dataset(cfg: RegularGraphConfig, seed: int, retries: int = 5):
    for attempt in range(retries):
        try:
            return regular_triangle_dataset(cfg.num_graphs, cfg.n, cfg.k, seed=[seed, attempt])
        except RetryError:
            continue
    raise RetryError(f"could not generate the regular-graph dataset for seed {seed}")


def _factor_checksum(graphs, p: float) -> str:
    return batch_factors(batch(graphs), FactorConfig(p=p)).checksum()


REGULAR_MODELS = (
    ("mlp", "mlp", "none"),
    ("mlp_batchnorm", "mlp", "batchnorm"),
    ("mlp_supernorm", "mlp", "supernorm"),
    ("gin", "gin", "none"),
)

ABLATION_VARIANTS = (
    ("full", False, False),
    ("rc_only", False, True),
    ("re_only", True, False),
    ("neither", True, True),
)


def _graph_runs(experiment: str, cfg: RegularGraphConfig, variants):
    """Train every ``(name, estimator kwargs)`` variant on every seed."""
    t = cfg.train
    rows, per_model = [], {}
    checksums_ok = True
    for s in range(cfg.seeds):
        seed = t.seed + s
        graphs = _regular_dataset(cfg, seed)
        y = np.array([g.label for g in graphs])
        tr, va, te = hierarchical_split(graphs, cfg.valid_frac, cfg.test_frac, stratify=y)
        pick = lambda idx: [graphs[i] for i in idx]
        before = _factor_checksum(pick(tr), cfg.p)
        for name, kwargs in variants:
            clf = GraphClassifier(
                num_layers=1, hidden_dim=t.hidden_dim, lr=t.lr, max_epochs=t.max_epochs,
                batch_size=t.batch_size, patience=t.plateau_patience, lr_floor=t.lr_floor,
                dropout=t.dropout, p=cfg.p, warmup_epochs=t.warmup_epochs, random_state=seed, **kwargs,
            )
            clf.fit(pick(tr), y[tr], eval_set=(pick(va), y[va]))
            scores = clf.decision_function(pick(te))
            auc = roc_auc(scores, y[te])
            acc = accuracy((scores > 0).astype(int), y[te])
            norm = kwargs.get("norm", "supernorm")
            rows += _history_rows(experiment, name, norm, 1, seed, clf.history_)
            last = clf.history_[-1]["epoch"]
            for metric, value in (("auc", auc), ("accuracy", acc)):
                rows.append(dict(experiment=experiment, model=name, norm=norm, depth=1, seed=seed,
                                 epoch=last, split="test", metric=metric, value=float(value)))
            entry = per_model.setdefault(name, dict(auc=[], accuracy=[], w_rc_abs=[], w_re_abs=[]))
            entry["auc"].append(auc)
            entry["accuracy"].append(acc)
            if "w_rc_abs" in clf.history_[0]:
                entry["w_rc_abs"].append([clf.history_[0]["w_rc_abs"], clf.history_[-1]["w_rc_abs"]])
                entry["w_re_abs"].append([clf.history_[0]["w_re_abs"], clf.history_[-1]["w_re_abs"]])
        checksums_ok &= before == _factor_checksum(pick(tr), cfg.p)
    models = {}
    for name, entry in per_model.items():
        models[name] = {"auc": _stats(entry["auc"]), "accuracy": _stats(entry["accuracy"])}
        if entry["w_rc_abs"]:
            models[name]["w_rc_abs_start_end"] = entry["w_rc_abs"]
            models[name]["w_re_abs_start_end"] = entry["w_re_abs"]
    summary = {"experiment": experiment, "config": config_dict(cfg), "models": models,
               "factors_unchanged": bool(checksums_ok)}
    return ExperimentReport(experiment, rows, summary)


def run_regular_graph_experiment(cfg: RegularGraphConfig = RegularGraphConfig()) -> ExperimentReport:
    """One-layer MLP, MLP+BatchNorm, MLP+SuperNorm and GIN on the triangle task."""
    variants = [(name, dict(conv=conv, norm=norm)) for name, conv, norm in REGULAR_MODELS]
    return _graph_runs("regular", cfg, variants)


def run_ablation(cfg: RegularGraphConfig = RegularGraphConfig()) -> ExperimentReport:
    """SuperNorm with calibration and/or enhancement frozen at zero."""
    variants = [
        (name, dict(conv="mlp", norm="supernorm", freeze_rc=frc, freeze_re=fre))
        for name, frc, fre in ABLATION_VARIANTS
    ]
    return _graph_runs("ablation", cfg, variants)


def run_oversmoothing_experiment(cfg: OversmoothingConfig = OversmoothingConfig()) -> OversmoothingReport:
    """Vanilla GCN with BatchNorm vs SuperNorm over a depth grid on a 2-block SBM."""
    t = cfg.train
    rows = []
    cells = {}
    checksums_ok = True
    for s in range(cfg.seeds):
        seed = t.seed + s
        ds = sbm_node_dataset(
            block_sizes=cfg.block_sizes, p_in=cfg.p_in, p_out=cfg.p_out, feature_dim=cfg.feature_dim,
            signal=cfg.signal, train_per_class=cfg.train_per_class, valid_frac=cfg.valid_frac, seed=seed,
        )
        for depth in cfg.depths:
            for norm in ("batchnorm", "supernorm"):
                clf = NodeClassifier(
                    conv="gcn", norm=norm, num_layers=depth, hidden_dim=t.hidden_dim, lr=t.lr,
                    max_epochs=t.max_epochs, patience=t.plateau_patience, lr_floor=t.lr_floor,
                    dropout=t.dropout, p=cfg.p, warmup_epochs=t.warmup_epochs, random_state=seed,
                )
                clf.fit(ds.graph, ds.labels, ds.train_idx, ds.valid_idx)
                if clf.factor_checksum_ is not None:
                    checksums_ok &= clf.factor_checksum_ == clf.inputs_.factors.checksum()
                pred = clf.predict()
                acc = accuracy(pred[ds.test_idx], ds.labels[ds.test_idx])
                intra, inter = class_distances(clf.embed(), ds.labels)
                model = f"gcn_{norm}"
                rows += _history_rows("oversmoothing", model, norm, depth, seed, clf.history_)
                last = clf.history_[-1]["epoch"]
                for metric, value in (("accuracy", acc), ("intra", intra), ("inter", inter)):
                    rows.append(dict(experiment="oversmoothing", model=model, norm=norm, depth=depth, seed=seed,
                                     epoch=last, split="test", metric=metric, value=float(value)))
                cell = cells.setdefault((norm, depth), dict(accuracy=[], intra=[], inter=[], ratio=[]))
                cell["accuracy"].append(acc)
                cell["intra"].append(intra)
                cell["inter"].append(inter)
                cell["ratio"].append(inter / intra if intra > 0 else float("inf"))
    norms = ("batchnorm", "supernorm")
    mean = lambda norm, key: [float(np.mean(cells[(norm, d)][key])) for d in cfg.depths]
    summary = {
        "experiment": "oversmoothing",
        "config": config_dict(cfg),
        "depths": list(cfg.depths),
        "models": {
            f"gcn_{norm}": {str(d): {k: _stats(v) for k, v in cells[(norm, d)].items()} for d in cfg.depths}
            for norm in norms
        },
        "factors_unchanged": bool(checksums_ok),
    }
    return OversmoothingReport(
        "oversmoothing", rows, summary, tuple(cfg.depths),
        accuracy={n: mean(n, "accuracy") for n in norms},
        intra={n: mean(n, "intra") for n in norms},
        inter={n: mean(n, "inter") for n in norms},
    )


PIPELINES = {
    "regular": run_regular_graph_experiment,
    "oversmoothing": run_oversmoothing_experiment,
    "ablation": run_ablation,
}


def run_experiment(experiment: str, cfg) -> ExperimentReport:
    return PIPELINES[experiment](cfg)
