"""Declarative run configuration (YAML or JSON) with command-line overrides.

Example::

    seed: 7
    spectrogram: {frame_length_s: 0.02, overlap_fraction: 0.5}
    train:
      n_vectors: 6000
      n_restarts: 10
      k_range: "1-15"         # inclusive range, or an explicit list
      feature_set: "[5]"
      em: {max_iters: 500, rel_tol: 1.0e-7, cov_floor: 1.0e-6}
    detection: {window_s: 0.5, hop_s: 0.1}
    evaluate:
      conditions: ["park:3", "market:3", "market:-3"]
      reps: 50
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .detector import DetectionConfig
from .features import SpectrogramConfig
from .gmm import EmConfig
from .trainer import TrainConfig

CONFIG_ENV = "BIRDNOVELTY_CONFIG"


@dataclass(frozen=True)
class RunConfig:
    spectrogram: SpectrogramConfig = SpectrogramConfig()
    train: TrainConfig = TrainConfig()
    detection: DetectionConfig = DetectionConfig()
    conditions: tuple = ("park:3", "market:3", "market:-3")
    reps: int = 50
    seed: int = 0
    source: str | None = field(default=None, compare=False)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=seed, train=replace(self.train, seed=seed))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "spectrogram": self.spectrogram.to_dict(),
            "train": self.train.to_dict(),
            "detection": self.detection.to_dict(),
            "evaluate": {"conditions": list(self.conditions), "reps": self.reps},
        }


def _k_range(value) -> tuple:
    if isinstance(value, str):
        lo, _, hi = value.replace("..", "-").partition("-")
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(v) for v in value)


def config_from_dict(raw: dict | None, source: str | None = None) -> RunConfig:
    raw = dict(raw or {})
    unknown = set(raw) - {"seed", "spectrogram", "train", "detection", "evaluate"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    seed = int(raw.get("seed", 0))

    train_raw = dict(raw.get("train") or {})
    em = EmConfig(**(train_raw.pop("em", None) or {}))
    if "k_range" in train_raw:
        train_raw["k_range"] = _k_range(train_raw["k_range"])
    train_raw.setdefault("seed", seed)
    train = TrainConfig(em=em, **train_raw)

    ev = dict(raw.get("evaluate") or {})
    kwargs = {}
    if "conditions" in ev:
        kwargs["conditions"] = tuple(ev["conditions"])
    if "reps" in ev:
        kwargs["reps"] = int(ev["reps"])
    return RunConfig(
        spectrogram=SpectrogramConfig(**(raw.get("spectrogram") or {})),
        train=train,
        detection=DetectionConfig(**(raw.get("detection") or {})),
        seed=seed,
        source=source,
        **kwargs,
    )


def load_config(path=None) -> RunConfig:
    """Load ``path``, else the file named by ``$BIRDNOVELTY_CONFIG``, else defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV)
    if path is None:
        return RunConfig()
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(yaml.safe_load(fh), source=str(path))
