"""Acceptance criteria 1-10, each at its stated tolerance.

Every check prints one ``criterion N ...: PASS|FAIL`` line and then
asserts. Under pytest the lines are collected into an "acceptance criteria"
section of the terminal summary. Run the file as a script to get the ten
lines without pytest.
"""

import io
import sys
import time
from contextlib import redirect_stdout

import numpy as np
import pytest

from supernorm import autodiff as ad
from supernorm.cli import main
from supernorm.experiments import load_config, run_ablation, run_oversmoothing_experiment, run_regular_graph_experiment
from supernorm.graph import Graph, batch, cycle_graph, disjoint_union, star_graph
from supernorm.layers import BatchNorm, SuperNorm, batchnorm, supernorm
from supernorm.properties import centering_residual, rc_margin_trials, re_margin_trials
from supernorm.spectral import batch_factors, spectrum
from supernorm.wl import are_isomorphic, canonical_pair_c6_vs_2c3


RESULT_LINES = []


def _emit(number, title, ok, detail):
    line = f"criterion {number:2d} {title}: {'PASS' if ok else 'FAIL'} ({detail})"
    RESULT_LINES.append(line)
    print(line, flush=True)


def _random_batch(rng, max_graphs=5, max_nodes=9):
    graphs = []
    for _ in range(int(rng.integers(1, max_graphs + 1))):
        k = int(rng.integers(1, max_nodes + 1))
        graphs.append(Graph(k, np.argwhere(np.triu(rng.random((k, k)) < rng.uniform(0.2, 0.8), 1)).tolist()))
    return batch(graphs)


def check_1():
    start = time.perf_counter()
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = main(["wl-test", "C6", "2xC3"])
    elapsed = time.perf_counter() - start
    first = buf.getvalue().splitlines()[0]
    c6, two_c3 = canonical_pair_c6_vs_2c3()
    err = max(
        np.abs(spectrum(c6) - np.array([-2, -1, -1, 1, 1, 2])).max(),
        np.abs(spectrum(two_c3) - np.array([-1, -1, -1, -1, 2, 2])).max(),
    )
    ok = code == 0 and first == "1-WL: indistinguishable; ξ: distinct" and err < 1e-8 and elapsed < 1.0
    return ok, f"'{first}', spectrum err {err:.1e}, {elapsed:.2f}s"


def check_2(tmp_path):
    import json

    start = time.perf_counter()
    out = tmp_path / "audit.json"
    with redirect_stdout(io.StringIO()):
        code = main(["audit", "--max-n", "5", "--out", str(out)])
    elapsed = time.perf_counter() - start
    report = json.loads(out.read_text())
    target_a, target_b = star_graph(4), disjoint_union(cycle_graph(4), Graph(1))
    flagged = False
    for r in report["records"]:
        a, b = Graph(r["n"], r["graph_a"]), Graph(r["n"], r["graph_b"])
        if not r["connected"] and (
            (are_isomorphic(a, target_a) and are_isomorphic(b, target_b))
            or (are_isomorphic(a, target_b) and are_isomorphic(b, target_a))
        ):
            flagged = True
    ok = code == 0 and report["connected_collisions"] == 0 and flagged and elapsed < 30
    detail = f"{report['connected_collisions']} connected collisions, K1,4 ~ C4+K1 flagged: {flagged}, {elapsed:.1f}s"
    return ok, detail


def check_3():
    start = time.perf_counter()
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = main(["gradcheck", "--instances", "20", "--h", "1e-5", "--tol", "1e-4"])
    elapsed = time.perf_counter() - start
    lines = [l for l in buf.getvalue().splitlines() if "max rel err" in l]
    worst = max(float(l.rsplit(" ", 1)[1]) for l in lines)
    ok = code == 0 and elapsed < 60
    return ok, f"{len(lines)} checks x 20 instances, worst rel err {worst:.1e}, {elapsed:.1f}s"


def check_4():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        b = _random_batch(rng)
        f = batch_factors(b)
        d = int(rng.integers(1, 9))
        h = rng.normal(size=(b.n_total, d)) * rng.uniform(0.1, 10.0)
        worst = max(worst, centering_residual(h, f.m_rc, rng.normal(size=d), b.segment_offsets))
    return worst < 1e-10, f"max deviation {worst:.1e} over 100 batches"


def check_5():
    rc = rc_margin_trials(200, seed=0, tol=1e-9)
    re = re_margin_trials(200, seed=0, tol=1e-9)
    ok = rc.passed and re.passed
    detail = (
        f"RC violations {rc.violations}/200 (worst margin {rc.worst_margin:.3g}), "
        f"RE violations {re.violations}/200 (worst margin {re.worst_margin:.3g})"
    )
    return ok, detail


def check_6():
    start = time.perf_counter()
    rep = run_regular_graph_experiment(load_config("regular"))
    elapsed = time.perf_counter() - start
    auc = {k: v["auc"]["mean"] for k, v in rep.summary["models"].items()}
    ok = (
        auc["mlp_batchnorm"] <= 0.60
        and auc["mlp_supernorm"] >= 0.90
        and auc["gin"] < auc["mlp_supernorm"]
        and elapsed < 180
    )
    detail = ", ".join(f"{k} {v:.3f}" for k, v in auc.items()) + f", {elapsed:.0f}s"
    return ok, detail


def check_7():
    start = time.perf_counter()
    rep = run_oversmoothing_experiment(load_config("oversmoothing", {"depths": "2,16"}))
    elapsed = time.perf_counter() - start
    models = rep.summary["models"]
    acc = {n: models[f"gcn_{n}"]["16"]["accuracy"]["mean"] for n in ("batchnorm", "supernorm")}
    ratio = {n: models[f"gcn_{n}"]["16"]["ratio"]["mean"] for n in ("batchnorm", "supernorm")}
    shallow = {n: models[f"gcn_{n}"]["2"]["accuracy"]["mean"] for n in ("batchnorm", "supernorm")}
    a_ok = acc["supernorm"] > acc["batchnorm"]
    b_ok = ratio["supernorm"] >= 1.5 * ratio["batchnorm"]
    sanity = min(shallow.values()) >= 0.9
    ok = a_ok and b_ok and sanity and elapsed < 300
    detail = (
        f"depth16 acc SN {acc['supernorm']:.3f} vs BN {acc['batchnorm']:.3f} [{'ok' if a_ok else 'no'}], "
        f"ratio SN {ratio['supernorm']:.2f} vs BN {ratio['batchnorm']:.2f} "
        f"= {ratio['supernorm'] / ratio['batchnorm']:.2f}x [{'ok' if b_ok else 'no'}], "
        f"depth2 acc min {min(shallow.values()):.3f}, {elapsed:.0f}s"
    )
    return ok, detail


def check_8():
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(50):
        b = _random_batch(rng)
        f = batch_factors(b)
        d = int(rng.integers(1, 9))
        h = rng.normal(size=(b.n_total, d)) * rng.uniform(0.1, 10.0) + rng.normal(size=d)
        sn, bn = SuperNorm(d), BatchNorm(d)
        sn.beta.values[...] = bn.beta.values[...] = rng.normal(size=(1, d))
        train_sn = supernorm(ad.constant(h), f, b.segment_offsets, sn).values
        train_bn = batchnorm(ad.constant(h), bn).values
        sn.eval()
        bn.eval()
        eval_sn = supernorm(ad.constant(h), f, b.segment_offsets, sn).values
        eval_bn = batchnorm(ad.constant(h), bn).values
        worst = max(worst, np.abs(train_sn - train_bn).max(), np.abs(eval_sn - eval_bn).max())
    return worst < 1e-12, f"max deviation {worst:.1e} over 50 batches, train and eval"


def check_9():
    start = time.perf_counter()
    rep = run_ablation(load_config("ablation"))
    elapsed = time.perf_counter() - start
    models = rep.summary["models"]
    auc = {k: v["auc"]["mean"] for k, v in models.items()}
    order_ok = auc["full"] >= auc["rc_only"] and auc["full"] >= auc["re_only"]
    full = models["full"]
    winning = [i for i, a in enumerate(full["auc"]["values"]) if a >= max(auc["rc_only"], auc["re_only"])]
    weights_ok = bool(winning) and all(
        full["w_rc_abs_start_end"][i][0] == 0.0
        and full["w_re_abs_start_end"][i][0] == 0.0
        and full["w_rc_abs_start_end"][i][1] > 0.0
        and full["w_re_abs_start_end"][i][1] > 0.0
        for i in winning
    )
    detail = ", ".join(f"{k} {v:.3f}" for k, v in auc.items())
    detail += f", weights start 0 / end >0 in {len(winning)} winning runs: {weights_ok}, {elapsed:.0f}s"
    return order_ok and weights_ok, detail


def check_10(tmp_path):
    configs = {
        "regular": "num_graphs = 60\nseeds = 2\nmax_epochs = 4\nhidden_dim = 16\n",
        "ablation": "num_graphs = 60\nseeds = 1\nmax_epochs = 4\nhidden_dim = 16\n",
        "oversmoothing": "block_sizes = 30,30\ndepths = 2,4\nseeds = 1\nmax_epochs = 8\nhidden_dim = 8\n",
    }
    identical = []
    for name, text in configs.items():
        cfg = tmp_path / f"{name}.cfg"
        cfg.write_text(text)
        outputs = []
        for run in ("a", "b"):
            out = tmp_path / f"{name}_{run}"
            with redirect_stdout(io.StringIO()):
                assert main(["train", name, "--config", str(cfg), "--seed", "11", "--out", str(out)]) == 0
            outputs.append([(out / f"{name}_{kind}").read_bytes() for kind in ("metrics.csv", "summary.json")])
        identical.append(outputs[0] == outputs[1])
    return all(identical), f"byte-identical CSV and JSON for {sum(identical)}/{len(identical)} pipelines"


CHECKS = [
    (1, "WL-beating separation", check_1, False),
    (2, "factor audit", check_2, True),
    (3, "gradient suite", check_3, False),
    (4, "centering identity", check_4, False),
    (5, "separation margins", check_5, False),
    (6, "regular-graph expressivity", check_6, False),
    (7, "oversmoothing", check_7, False),
    (8, "initialization identity", check_8, False),
    (9, "ablation ordering", check_9, False),
    (10, "determinism", check_10, True),
]


@pytest.mark.parametrize("number,title,check,needs_tmp", CHECKS, ids=[f"criterion_{c[0]}" for c in CHECKS])
def test_acceptance(number, title, check, needs_tmp, tmp_path):
    ok, detail = check(tmp_path) if needs_tmp else check()
    _emit(number, title, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    import tempfile
    from pathlib import Path

    failures = 0
    for number, title, check, needs_tmp in CHECKS:
        with tempfile.TemporaryDirectory() as tmp:
            ok, detail = check(Path(tmp)) if needs_tmp else check()
        _emit(number, title, ok, detail)
        failures += not ok
    sys.exit(1 if failures else 0)
