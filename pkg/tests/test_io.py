import numpy as np
import pytest

from supernorm.exceptions import CacheMismatchError, DimensionError, ParseError, ValidationError
from supernorm.graph import complete_graph
from supernorm.io import (
    DatasetManifest,
    atomic_write_text,
    content_hash,
    dump_dataset,
    load_checkpoint,
    load_dataset,
    load_factor_cache,
    parse_config,
    save_checkpoint,
    save_factor_cache,
    write_metrics_csv,
)
from supernorm.spectral import FactorConfig


def _write(path, lines):
    path.write_text("".join(line + "\n" for line in lines))
    return path


class TestLoadDataset:
    def test_two_graphs(self, tmp_path):
        p = _write(tmp_path / "d.jsonl", [
            '{"num_nodes": 3, "edges": [[0,1],[1,2],[0,2]]}',
            '',
            '{"num_nodes": 2, "edges": [[0,1]], "label": 1}',
        ])
        gs = load_dataset(p)
        assert len(gs) == 2 and gs[0] == complete_graph(3) and gs[1].label == 1

    def test_self_loop_message(self, tmp_path):
        p = _write(tmp_path / "d.jsonl", ['{"num_nodes": 2, "edges": [[0,0]]}'])
        with pytest.raises(ValidationError, match="self-loop at graph 0"):
            load_dataset(p)

    def test_feature_row_mismatch(self, tmp_path):
        p = _write(tmp_path / "d.jsonl", ['{"num_nodes": 2, "edges": [], "features": [[1.0]]}'])
        with pytest.raises(DimensionError):
            load_dataset(p)

    def test_out_of_range_edge_names_graph(self, tmp_path):
        p = _write(tmp_path / "d.jsonl", ['{"num_nodes": 2}', '{"num_nodes": 2, "edges": [[0,5]]}'])
        with pytest.raises(ValidationError, match="graph 1"):
            load_dataset(p)

    def test_parse_error_line_number(self, tmp_path):
        p = _write(tmp_path / "d.jsonl", ['{"num_nodes": 1}', '{oops'])
        with pytest.raises(ParseError, match="line 2"):
            load_dataset(p)

    def test_roundtrip(self, tmp_path):
        g = complete_graph(3).with_features(np.eye(3))
        dump_dataset([g], tmp_path / "x.jsonl")
        assert load_dataset(tmp_path / "x.jsonl") == [g]


class TestFactorCache:
    def test_roundtrip_and_mismatch(self, tmp_path):
        data = _write(tmp_path / "d.jsonl", ['{"num_nodes": 1}'])
        cache = tmp_path / "c.json"
        save_factor_cache(cache, np.array([0.05]), np.array([1]), FactorConfig(), content_hash(data))
        loaded = load_factor_cache(cache, data)
        assert loaded["xi"].tolist() == [0.05] and loaded["p"] == 0.05
        _write(data, ['{"num_nodes": 2}'])
        with pytest.raises(CacheMismatchError):
            load_factor_cache(cache, data)

    def test_manifest(self, tmp_path):
        data = _write(tmp_path / "d.jsonl", ['{"num_nodes": 1}'])
        m = DatasetManifest.for_file(data)
        assert m.content_hash == content_hash(data) and m.factor_cache_path is None


class TestConfigAndFiles:
    def test_parse_config(self, tmp_path):
        p = _write(tmp_path / "c.cfg", ["# comment", "lr = 0.01", "seeds=3  # inline", "name = x", "flag = true"])
        assert parse_config(p) == {"lr": 0.01, "seeds": 3, "name": "x", "flag": True}

    def test_parse_config_error(self, tmp_path):
        with pytest.raises(ParseError):
            parse_config(_write(tmp_path / "c.cfg", ["novalue"]))

    def test_checkpoint_roundtrip(self, tmp_path):
        state = {"a": np.arange(6.0).reshape(2, 3), "b": np.array([[0.1]])}
        save_checkpoint(state, tmp_path / "ck.json")
        out = load_checkpoint(tmp_path / "ck.json")
        for k in state:
            np.testing.assert_array_equal(out[k], state[k])

    def test_metrics_csv(self, tmp_path):
        row = dict(experiment="e", model="m", norm="n", depth=1, seed=0, epoch=2, split="test",
                   metric="auc", value=0.1)
        write_metrics_csv([row], tmp_path / "m.csv")
        lines = (tmp_path / "m.csv").read_text().splitlines()
        assert lines[0] == "experiment,model,norm,depth,seed,epoch,split,metric,value"
        assert lines[1] == "e,m,n,1,0,2,test,auc,0.1"

    def test_atomic_write_leaves_no_temp(self, tmp_path):
        atomic_write_text(tmp_path / "sub" / "f.txt", "hello")
        assert [p.name for p in (tmp_path / "sub").iterdir()] == ["f.txt"]
