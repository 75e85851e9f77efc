"""Dataset ingestion, factor caches, checkpoints and report files.

Every writer goes through :func:`atomic_write_text` (temp file + rename).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .exceptions import CacheMismatchError, DimensionError, ParseError, ValidationError
from .graph import Graph
from .spectral import FactorConfig


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def content_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def graph_from_record(record: dict, index: int) -> Graph:
    if not isinstance(record, dict) or "num_nodes" not in record:
        raise ValidationError(f"graph {index}: expected an object with 'num_nodes'")
    n = record["num_nodes"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 0:
        raise ValidationError(f"graph {index}: num_nodes must be a non-negative integer")
    edges = record.get("edges", [])
    for e in edges:
        if not isinstance(e, list) or len(e) != 2 or not all(isinstance(x, int) for x in e):
            raise ValidationError(f"graph {index}: malformed edge {e!r}")
        if e[0] == e[1]:
            raise ValidationError(f"self-loop at graph {index}")
    feats = record.get("features")
    if feats is not None:
        widths = {len(row) for row in feats}
        if len(widths) > 1:
            raise DimensionError(f"graph {index}: ragged feature rows")
        if len(feats) != n:
            raise DimensionError(f"graph {index}: {len(feats)} feature rows for {n} nodes")
        feats = np.asarray(feats, dtype=np.float64).reshape(n, widths.pop() if widths else 0)
    try:
        return Graph(n, [tuple(e) for e in edges], feats, record.get("label"))
    except ValidationError as exc:
        raise type(exc)(f"graph {index}: {exc}") from None


def graph_to_record(g: Graph) -> dict:
    rec = {"num_nodes": g.num_nodes, "edges": [list(e) for e in g.edges]}
    if g.features is not None:
        rec["features"] = g.features.tolist()
    if g.label is not None:
        rec["label"] = g.label
    return rec


def load_dataset(path) -> list:
    """Read one JSON graph object per non-empty line."""
    graphs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"line {lineno}: {exc.msg}") from None
            graphs.append(graph_from_record(record, len(graphs)))
    return graphs


def dump_dataset(graphs: Iterable[Graph], path) -> None:
    lines = [json.dumps(graph_to_record(g), separators=(",", ":")) for g in graphs]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


@dataclass
class DatasetManifest:
    path: str
    content_hash: str
    factor_cache_path: Optional[str] = None
    split_spec: Optional[tuple] = None

    @classmethod
    def for_file(cls, path, factor_cache_path=None, split_spec=None) -> "DatasetManifest":
        return cls(str(path), content_hash(path), factor_cache_path, split_spec)


def save_factor_cache(path, xi: np.ndarray, offsets: np.ndarray, cfg: FactorConfig, digest: str) -> None:
    payload = {
        "content_hash": digest,
        "p": cfg.p,
        "eig_quantum": cfg.eig_quantum,
        "segment_offsets": [int(o) for o in offsets],
        "xi": [float(v) for v in xi],
    }
    atomic_write_text(path, json.dumps(payload, sort_keys=True, indent=1) + "\n")


def load_factor_cache(path, dataset_path) -> dict:
    """Load a cache and insist it was built from ``dataset_path``'s bytes."""
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc.msg}") from None
    expected = content_hash(dataset_path)
    if payload.get("content_hash") != expected:
        raise CacheMismatchError(
            f"factor cache {path} was built for {payload.get('content_hash')}, dataset hash is {expected}"
        )
    payload["xi"] = np.asarray(payload["xi"], dtype=np.float64)
    payload["segment_offsets"] = np.asarray(payload["segment_offsets"], dtype=np.int64)
    return payload


def parse_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment.

    Values are converted to int, float or bool where they parse as such.
    """
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key] = _coerce(value)
    return out


def _coerce(value: str):
    low = value.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def save_checkpoint(state: dict, path) -> None:
    payload = {
        name: {"shape": list(np.shape(v)), "values": np.asarray(v, dtype=np.float64).ravel().tolist()}
        for name, v in sorted(state.items())
    }
    atomic_write_text(path, json.dumps(payload, sort_keys=True) + "\n")


def load_checkpoint(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return {
        name: np.asarray(entry["values"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in payload.items()
    }


def format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


METRIC_COLUMNS = ("experiment", "model", "norm", "depth", "seed", "epoch", "split", "metric", "value")


def write_metrics_csv(rows: Iterable[dict], path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRIC_COLUMNS)
    for row in rows:
        writer.writerow([format_value(row[c]) for c in METRIC_COLUMNS])
    atomic_write_text(path, buf.getvalue())


def write_json(obj, path) -> None:
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")
