import json

import numpy as np
import pytest

from birdnovelty.audio_io import AudioClip
from birdnovelty.features import FeatureSet, clip_features
from birdnovelty.gmm import EmConfig
from birdnovelty.persistence import dumps, model_to_dict
from birdnovelty.synthetic import training_corpus
from birdnovelty.trainer import (
    TrainConfig,
    build_training_pool,
    subsample,
    train_species,
    training_report,
)

SMALL = TrainConfig(n_vectors=800, n_restarts=2, k_range=(1, 2, 3, 4), seed=11)


@pytest.fixture(scope="module")
def corpus():
    return training_corpus(6, 15.0, 22050, seed=5)


def test_pool_rows_are_selected_frames(corpus):
    pool = build_training_pool(corpus)
    expected = sum(clip_features(c, select=True)[1].size for c in corpus)
    assert pool.shape == (expected, 1)


def test_duplicate_recording_doubles_rows(corpus):
    single = build_training_pool(corpus[:1], feature_set=FeatureSet((1, 2)))
    double = build_training_pool([corpus[0], corpus[0]], feature_set=FeatureSet((1, 2)))
    np.testing.assert_array_equal(double, np.vstack([single, single]))


def test_subsample_without_replacement():
    pool = np.arange(100.0)[:, None]
    idx = subsample(pool, 60, seed=3)
    assert len(set(idx.tolist())) == 60
    np.testing.assert_array_equal(idx, subsample(pool, 60, seed=3))
    with pytest.raises(ValueError, match="pool too small"):
        subsample(pool, 101, seed=3)


def test_pool_of_5999_rows_rejected():
    pool = np.random.default_rng(0).standard_normal((5999, 1))
    with pytest.raises(ValueError, match="pool too small: 5999"):
        train_species(pool, TrainConfig())


def test_single_gaussian_selects_one_component():
    pool = np.random.default_rng(1).normal(4000.0, 300.0, size=(3000, 1))
    model = train_species(pool, TrainConfig(n_vectors=2500, n_restarts=3, k_range=range(1, 6)))
    assert model.selected_k == 1
    assert min(model.mdl_by_k, key=model.mdl_by_k.get) == 1


def test_three_clusters_select_three():
    rng = np.random.default_rng(2)
    pool = np.concatenate([rng.normal(m, 100.0, 1000) for m in (2000, 4000, 7000)])[:, None]
    model = train_species(pool, TrainConfig(n_vectors=2400, n_restarts=4, k_range=range(1, 7)))
    assert model.selected_k == 3


def test_report_flags_argmin(corpus):
    pool = build_training_pool(corpus)
    model = train_species(pool, SMALL)
    report = training_report(model)
    assert [r["K"] for r in report] == [1, 2, 3, 4]
    flagged = [r["K"] for r in report if r["selected"]]
    assert flagged == [min(report, key=lambda r: (r["mdl"], r["K"]))["K"]]


def test_training_is_deterministic_across_jobs(corpus):
    pool = build_training_pool(corpus)
    a = dumps(model_to_dict(train_species(pool, SMALL)))
    b = dumps(model_to_dict(train_species(pool, SMALL)))
    c = dumps(model_to_dict(train_species(pool, SMALL, jobs=2)))
    assert a == b == c


def test_seed_changes_model(corpus):
    pool = build_training_pool(corpus)
    a = model_to_dict(train_species(pool, SMALL))
    b = model_to_dict(train_species(pool, TrainConfig(**{**SMALL.__dict__, "seed": 12})))
    assert json.dumps(a["gmm"]) != json.dumps(b["gmm"])


def test_density_uses_standardizer(corpus):
    model = train_species(build_training_pool(corpus), SMALL)
    raw = np.array([[4500.0]])
    expected = model.gmm.pdf(model.standardizer.apply(raw))
    assert model.density(raw)[0] == expected[0]


def test_zero_variance_pool():
    pool = np.full((50, 1), 3000.0)
    with pytest.raises(ValueError, match="zero-variance training feature: mode"):
        train_species(pool, TrainConfig(n_vectors=40, k_range=(1,)))


def test_silent_corpus_rejected():
    with pytest.raises(ValueError):
        build_training_pool([AudioClip(np.zeros(22050), 22050)])


def test_em_config_propagates():
    pool = np.random.default_rng(3).standard_normal((500, 1))
    cfg = TrainConfig(n_vectors=400, n_restarts=1, k_range=(2,), em=EmConfig(max_iters=1))
    model = train_species(pool, cfg)
    assert model.gmm.n_iter == 1
