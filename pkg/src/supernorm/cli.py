"""Command-line entry point: ``supernorm <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 numerical or convergence error. Every error prints one diagnostic line
to stderr.
"""

from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

import numpy as np

from .data import hierarchical_split
from .exceptions import ParseError, SupernormError
from .graph import Graph, complete_graph, cycle_graph, disjoint_union, path_graph, star_graph
from .io import (
    atomic_write_text,
    content_hash,
    load_dataset,
    parse_config,
    save_factor_cache,
    write_json,
)
from .spectral import FactorConfig, graph_factors, spectrum
from .wl import factor_injectivity_audit, wl_distinguish, xi_multiset

EXIT_USAGE = 1
EXPERIMENTS = ("ablation", "oversmoothing", "regular")

_BUILDERS = {"C": cycle_graph, "K": complete_graph, "P": path_graph, "S": star_graph}
_TERM = re.compile(r"^(?:(\d+)x)?([CKPS])(\d+)$")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_graph_spec(text: str) -> Graph:
    """A graph from a JSONL path (first record) or a shorthand like ``2xC3+K1``.

    Shorthand terms are ``C<n>`` (cycle), ``K<n>`` (complete), ``P<n>``
    (path) and ``S<k>`` (star with ``k`` leaves), optionally repeated with
    ``<m>x`` and joined into a disjoint union with ``+``.
    """
    path = Path(text)
    if path.exists():
        graphs = load_dataset(path)
        if not graphs:
            raise ParseError(f"{text}: no graph records")
        return graphs[0]
    parts = []
    for term in text.split("+"):
        match = _TERM.match(term.strip())
        if not match:
            raise ParseError(f"{text!r} is neither a file nor a graph shorthand such as C6 or 2xC3")
        repeat, kind, size = int(match.group(1) or 1), match.group(2), int(match.group(3))
        parts += [_BUILDERS[kind](size)] * repeat
    return disjoint_union(*parts)


def _fmt(values) -> str:
    return "[" + ", ".join(f"{v:.10g}" for v in values) + "]"


def cmd_precompute_factors(args) -> int:
    graphs = load_dataset(args.dataset)
    cfg = FactorConfig(p=args.p, eig_quantum=args.eig_quantum)
    memo: dict = {}
    xi = [graph_factors(g, cfg, memo) for g in graphs]
    offsets = np.cumsum([g.num_nodes for g in graphs]).astype(np.int64)
    flat = np.concatenate(xi) if xi else np.zeros(0)
    save_factor_cache(args.out, flat, offsets, cfg, content_hash(args.dataset))
    print(f"wrote factors for {len(graphs)} graphs ({len(flat)} nodes) to {args.out}")
    return 0


def cmd_wl_test(args) -> int:
    a, b = parse_graph_spec(args.graph_a), parse_graph_spec(args.graph_b)
    cfg = FactorConfig(p=args.p)
    wl = "distinguishable" if wl_distinguish(a, b) else "indistinguishable"
    xa, xb = xi_multiset(a, cfg), xi_multiset(b, cfg)
    same = len(xa) == len(xb) and np.allclose(xa, xb, rtol=1e-12, atol=0.0)
    print(f"1-WL: {wl}; ξ: {'identical' if same else 'distinct'}")
    print(f"spectrum A: {_fmt(spectrum(a, cfg))}")
    print(f"spectrum B: {_fmt(spectrum(b, cfg))}")
    print(f"ξ multiset A: {_fmt(xa)}")
    print(f"ξ multiset B: {_fmt(xb)}")
    return 0


def cmd_audit(args) -> int:
    records = factor_injectivity_audit(args.max_n, FactorConfig(p=args.p))
    connected = [r for r in records if r["connected"]]
    report = {
        "max_n": args.max_n,
        "collisions": len(records),
        "connected_collisions": len(connected),
        "records": records,
    }
    if args.out:
        write_json(report, args.out)
    print(f"collisions: {len(records)} total, {len(connected)} among connected graphs")
    for r in records:
        kind = "connected" if r["connected"] else "disconnected"
        print(f"  n={r['n']} m={r['m']} {kind}: {r['graph_a']} ~ {r['graph_b']}")
    return 0


def cmd_split(args) -> int:
    graphs = load_dataset(args.dataset)
    labels = [g.label for g in graphs]
    stratify = labels if args.stratify else None
    if args.stratify and any(label is None for label in labels):
        raise ParseError("--stratify needs a label on every graph")
    train, valid, test = hierarchical_split(graphs, args.valid, args.test, stratify=stratify)
    out = Path(args.out)
    for name, idx in (("train", train), ("valid", valid), ("test", test)):
        atomic_write_text(out / f"{name}.idx", "".join(f"{i}\n" for i in idx))
    print(f"train {len(train)}, valid {len(valid)}, test {len(test)} -> {out}")
    return 0


def cmd_train(args) -> int:
    from .experiments import load_config, run_experiment

    values = parse_config(args.config) if args.config else {}
    cfg = load_config(args.experiment, values, seed=args.seed)
    report = run_experiment(args.experiment, cfg)
    csv_path, json_path = report.write(args.out)
    print(f"wrote {csv_path} and {json_path}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_gradcheck_suite

    result = run_gradcheck_suite(instances=args.instances, seed=args.seed, h=args.h, tol=args.tol)
    for name, err in sorted(result.worst.items()):
        print(f"{'ok  ' if err < result.tol else 'FAIL'} {name:28s} max rel err {err:.3e}")
    if not result.passed:
        print(f"gradcheck failed for {sorted(result.failures)}", file=sys.stderr)
        return 3
    print(f"gradcheck passed: {len(result.worst)} checks x {args.instances} instances")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="supernorm", description="Subgraph-factor normalization toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("precompute-factors", help="compute and cache per-node factors")
    p.add_argument("dataset")
    p.add_argument("--p", type=float, default=0.05)
    p.add_argument("--eig-quantum", type=float, default=1e-6)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_precompute_factors)

    p = sub.add_parser("wl-test", help="compare two graphs under 1-WL and the factor multiset")
    p.add_argument("graph_a")
    p.add_argument("graph_b")
    p.add_argument("--p", type=float, default=0.05)
    p.set_defaults(func=cmd_wl_test)

    p = sub.add_parser("audit", help="list factor collisions among small graphs")
    p.add_argument("--max-n", type=int, required=True)
    p.add_argument("--p", type=float, default=0.05)
    p.add_argument("--out")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("split", help="density-bucketed train/valid/test split")
    p.add_argument("dataset")
    p.add_argument("--valid", type=float, required=True)
    p.add_argument("--test", type=float, required=True)
    p.add_argument("--stratify", action="store_true", help="split each label separately")
    p.add_argument("--out", required=True, help="directory for train.idx, valid.idx, test.idx")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="run an experiment pipeline")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gradcheck", help="finite-difference check of every tape operation")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SupernormError as exc:
        print(f"supernorm {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"supernorm {args.command}: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"supernorm {args.command}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
