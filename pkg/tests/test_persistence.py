import json

import numpy as np
import pytest

from birdnovelty.config import config_from_dict, load_config
from birdnovelty.evaluation import ExperimentSummary, SummaryCell
from birdnovelty.features import FeatureSet, Standardizer
from birdnovelty.gmm import GmmModel
from birdnovelty.persistence import (
    SchemaError,
    atomic_write,
    creation_stamp,
    model_to_dict,
    read_model,
    read_summary,
    write_model,
    write_summary,
)
from birdnovelty.trainer import SpeciesModel


@pytest.fixture
def model():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((2, 2, 2))
    return SpeciesModel(
        species_id="wren",
        feature_set=FeatureSet((5, 2)),
        standardizer=Standardizer(np.array([3123.456789, 412.1]), np.array([510.0 / 3, 77.7])),
        gmm=GmmModel([1 / 3, 2 / 3], rng.standard_normal((2, 2)), A @ A.transpose(0, 2, 1) + np.eye(2) * 0.1,
                     train_log_likelihood=-1234.5678901234567, n_iter=17),
        mdl_by_k={1: 10.1, 2: 9.123456789012345},
        best_ll_by_k={1: -5.0, 2: -4.0},
        provenance={"seed": 3},
    )


def test_model_round_trip_is_exact(tmp_path, model):
    path = write_model(model, tmp_path / "m.model.json")
    back = read_model(path)
    for attr in ("weights", "means", "covariances"):
        assert np.array_equal(getattr(back.gmm, attr), getattr(model.gmm, attr))
    assert np.array_equal(back.standardizer.offset, model.standardizer.offset)
    assert np.array_equal(back.standardizer.scale, model.standardizer.scale)
    assert back.feature_set == model.feature_set and back.mdl_by_k == model.mdl_by_k
    assert back.gmm.train_log_likelihood == model.gmm.train_log_likelihood
    X = np.array([[3000.0, 400.0], [3500.0, 300.0]])
    assert np.array_equal(back.density(X), model.density(X))
    assert json.dumps(model_to_dict(back)) == json.dumps(model_to_dict(model))


def test_unknown_schema_version_rejected(tmp_path, model):
    d = model_to_dict(model)
    d["schema_version"] = 2
    p = tmp_path / "future.model.json"
    p.write_text(json.dumps(d))
    with pytest.raises(SchemaError, match="schema_version"):
        read_model(p)


def test_atomic_write_leaves_no_temp_files(tmp_path):
    atomic_write(tmp_path / "sub" / "a.txt", "hello")
    atomic_write(tmp_path / "sub" / "a.txt", b"bytes")
    assert [p.name for p in (tmp_path / "sub").iterdir()] == ["a.txt"]
    assert (tmp_path / "sub" / "a.txt").read_bytes() == b"bytes"


def test_creation_stamp_from_environment(monkeypatch):
    monkeypatch.delenv("SOURCE_DATE_EPOCH", raising=False)
    assert creation_stamp() is None
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    assert creation_stamp() == "1970-01-01T00:00:00+00:00"


def test_summary_round_trip(tmp_path):
    cells = [SummaryCell("wren", "[5]", c, 0.9, 0.8, 0.95, 3, 2, [0.8, 0.9, 0.95])
             for c in ("park+3dB", "market-3dB")]
    s = ExperimentSummary(cells, ["park+3dB", "market-3dB"], {"master_seed": 1})
    json_path, csv_path = write_summary(s, tmp_path)
    back = read_summary(json_path)
    assert back.table_rows() == s.table_rows()
    text = csv_path.read_text()
    assert text.startswith("# schema_version: 1\n")
    assert "wren,auc,0.90-0.90" in text


def test_config_file_and_env(tmp_path, monkeypatch):
    cfg_path = tmp_path / "run.yaml"
    cfg_path.write_text(
        "seed: 7\ntrain:\n  n_vectors: 100\n  k_range: 1-3\n  em: {max_iters: 20}\n"
        "evaluate:\n  conditions: ['a:1']\n  reps: 4\n")
    cfg = load_config(cfg_path)
    assert cfg.seed == 7 and cfg.train.seed == 7
    assert cfg.train.k_range == (1, 2, 3) and cfg.train.em.max_iters == 20
    assert cfg.conditions == ("a:1",) and cfg.reps == 4
    monkeypatch.setenv("BIRDNOVELTY_CONFIG", str(cfg_path))
    assert load_config().train.n_vectors == 100
    monkeypatch.delenv("BIRDNOVELTY_CONFIG")
    assert load_config().train.n_vectors == 6000


def test_config_rejects_unknown_section():
    with pytest.raises(ValueError, match="unknown config sections"):
        config_from_dict({"trian": {}})
    assert config_from_dict({"train": {"k_range": [2, 4]}}).train.k_range == (2, 4)
