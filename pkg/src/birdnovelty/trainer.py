"""Per-species training: frame pooling, subsampling, EM restarts and MDL selection.

Random streams are keyed by counters rather than drawn in sequence, so the
K x restart grid can run in any order (or in parallel) with identical
results::

    subsample draw      -> SeedSequence([seed, 0])
    EM for (K, restart) -> SeedSequence([seed, 1, K, restart])
"""
from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import __version__
from .audio_io import AudioClip
from .features import (
    FeatureSet,
    MODE_ONLY,
    SpectrogramConfig,
    Standardizer,
    clip_features,
    fit_standardizer,
)
from .gmm import EmCollapseError, EmConfig, GmmModel, em_fit, mdl_score

logger = logging.getLogger(__name__)

SUBSAMPLE_STREAM = 0
EM_STREAM = 1


@dataclass(frozen=True)
class TrainConfig:
    n_vectors: int = 6000
    n_restarts: int = 10
    k_range: tuple = tuple(range(1, 16))
    feature_set: FeatureSet = MODE_ONLY
    seed: int = 0
    em: EmConfig = EmConfig()

    def __post_init__(self):
        object.__setattr__(self, "k_range", tuple(int(k) for k in self.k_range))
        object.__setattr__(self, "feature_set", FeatureSet.parse(self.feature_set))
        if self.n_vectors <= 0 or self.n_restarts < 1 or not self.k_range:
            raise ValueError("n_vectors > 0, n_restarts >= 1 and a non-empty k_range are required")
        if min(self.k_range) < 1:
            raise ValueError("component counts must be >= 1")

    def to_dict(self) -> dict:
        em = self.em.to_dict()
        em.pop("seed")
        return {
            "n_vectors": self.n_vectors,
            "n_restarts": self.n_restarts,
            "k_range": list(self.k_range),
            "feature_set": list(self.feature_set.indices),
            "seed": self.seed,
            "em": em,
        }


@dataclass(frozen=True, eq=False)
class SpeciesModel:
    """A trained per-species normality model."""

    species_id: str
    feature_set: FeatureSet
    standardizer: Standardizer
    gmm: GmmModel
    mdl_by_k: dict
    best_ll_by_k: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.gmm.d != len(self.feature_set) or self.standardizer.dim != len(self.feature_set):
            raise ValueError("feature set, standardizer and GMM dimensions disagree")

    @property
    def selected_k(self) -> int:
        return self.gmm.K

    @property
    def model_id(self) -> str:
        return f"{self.species_id}{self.feature_set.label}"

    def density(self, raw_features) -> np.ndarray:
        """GMM density of raw (unstandardised) rows restricted to the feature set."""
        return self.gmm.pdf(self.standardizer.apply(raw_features))


def corpus_digest(recordings: Sequence[AudioClip]) -> str:
    h = hashlib.sha256()
    for clip in recordings:
        h.update(str(clip.sample_rate).encode())
        h.update(np.ascontiguousarray(clip.samples).tobytes())
    return h.hexdigest()


def build_training_pool(recordings: Sequence[AudioClip], cfg: SpectrogramConfig = SpectrogramConfig(),
                        feature_set: FeatureSet = MODE_ONLY) -> np.ndarray:
    """Top-decile-power frame features of every recording, stacked.

    Columns are restricted to ``feature_set``.
    """
    if not recordings:
        raise ValueError("no recordings given")
    fs = FeatureSet.parse(feature_set)
    rows = []
    for clip in recordings:
        feats, _, _ = clip_features(clip, cfg, select=True)
        rows.append(fs.select(feats))
    pool = np.vstack(rows)
    if pool.shape[0] == 0:
        raise ValueError("empty training pool after frame selection")
    return pool


def subsample(pool: np.ndarray, n: int, seed: int) -> np.ndarray:
    """Row indices of an ``n``-row draw without replacement."""
    if pool.shape[0] < n:
        raise ValueError(f"pool too small: {pool.shape[0]} rows, need {n}")
    rng = np.random.default_rng([seed, SUBSAMPLE_STREAM])
    return np.sort(rng.choice(pool.shape[0], size=n, replace=False))


def _fit_cell(args):
    X, K, restart, seed, em = args
    cfg = replace(em, seed=(seed, EM_STREAM, K, restart))
    try:
        return K, restart, em_fit(X, K, cfg)
    except EmCollapseError as exc:
        logger.warning("K=%d restart %d failed: %s", K, restart, exc)
        return K, restart, None


def fit_grid(X: np.ndarray, cfg: TrainConfig, jobs: int = 1) -> dict:
    """Best-of-restarts GMM for every K in ``cfg.k_range``."""
    cells = [(X, K, r, cfg.seed, cfg.em) for K in cfg.k_range for r in range(cfg.n_restarts)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_fit_cell, cells))
    else:
        results = [_fit_cell(c) for c in cells]

    best: dict[int, GmmModel] = {}
    # results arrive in grid order; ties keep the lowest restart index
    for K, _, model in results:
        if model is None:
            continue
        if K not in best or model.train_log_likelihood > best[K].train_log_likelihood:
            best[K] = model
    missing = [K for K in cfg.k_range if K not in best]
    if missing:
        raise RuntimeError(f"all EM restarts failed for K={missing}")
    return best


def train_species(pool, cfg: TrainConfig = TrainConfig(), species_id: str = "species",
                  spectrogram_cfg: SpectrogramConfig | None = None, digest: str | None = None,
                  jobs: int = 1) -> SpeciesModel:
    """Fit the MDL-selected GMM for one species from its pooled features."""
    pool = np.asarray(pool, dtype=np.float64)
    if pool.ndim != 2 or pool.shape[1] != len(cfg.feature_set):
        raise ValueError(
            f"pool must have {len(cfg.feature_set)} columns for feature set {cfg.feature_set.label}"
        )
    rows = subsample(pool, cfg.n_vectors, cfg.seed)
    train = pool[rows]
    standardizer = fit_standardizer(train, cfg.feature_set.names)
    X = standardizer.apply(train)

    best = fit_grid(X, cfg, jobs=jobs)
    n = X.shape[0]
    mdl_by_k = {K: mdl_score(best[K], n) for K in cfg.k_range}
    selected = min(cfg.k_range, key=lambda K: (mdl_by_k[K], K))

    provenance = {
        "tool_version": __version__,
        "train_config": cfg.to_dict(),
        "spectrogram_config": (spectrogram_cfg or SpectrogramConfig()).to_dict(),
        "mdl": "-LL + (P/2) ln n, natural log",
        "n_pool_rows": int(pool.shape[0]),
        "corpus_digest": digest,
    }
    return SpeciesModel(
        species_id=species_id,
        feature_set=cfg.feature_set,
        standardizer=standardizer,
        gmm=best[selected],
        mdl_by_k=mdl_by_k,
        best_ll_by_k={K: best[K].train_log_likelihood for K in cfg.k_range},
        provenance=provenance,
    )


def training_report(model: SpeciesModel) -> list[dict]:
    """One row per K: MDL, best log-likelihood and whether it was selected."""
    return [
        {
            "K": K,
            "mdl": model.mdl_by_k[K],
            "best_log_likelihood": model.best_ll_by_k.get(K),
            "selected": K == model.selected_k,
        }
        for K in sorted(model.mdl_by_k)
    ]
