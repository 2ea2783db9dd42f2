"""Windowed density scoring of test recordings against a species model."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .audio_io import AudioClip
from .features import SpectrogramConfig, features_matrix, spectrogram
from .trainer import SpeciesModel


@dataclass(frozen=True)
class DetectionConfig:
    window_s: float = 0.5
    hop_s: float = 0.1
    # "arithmetic" averages densities; "geometric" averages log-densities
    average: str = "arithmetic"

    def __post_init__(self):
        if not 0 < self.hop_s <= self.window_s:
            raise ValueError("need 0 < hop_s <= window_s")
        if self.average not in ("arithmetic", "geometric"):
            raise ValueError(f"unknown averaging {self.average!r}")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True, eq=False)
class DetectionTrace:
    times_s: np.ndarray
    scores: np.ndarray
    window_s: float
    hop_s: float
    model_id: str
    window_starts: np.ndarray
    window_length: int
    sample_rate: int
    frame_densities: np.ndarray

    def __len__(self) -> int:
        return self.scores.size


def n_windows(n_samples: int, sample_rate: int, cfg: DetectionConfig) -> int:
    """``floor((duration - window) / hop) + 1``, evaluated in exact rationals."""
    span = Fraction(n_samples, sample_rate) - Fraction(repr(cfg.window_s))
    if span < 0:
        raise ValueError(
            f"clip of {n_samples / sample_rate:.3f} s is shorter than the {cfg.window_s} s window"
        )
    return math.floor(span / Fraction(repr(cfg.hop_s))) + 1


def window_starts(n_samples: int, sample_rate: int, cfg: DetectionConfig) -> tuple[np.ndarray, int]:
    """Start sample of every analysis window and the window length in samples.

    Window j starts at ``round(j * hop_s * fs)``; windows are emitted while
    ``j * hop_s + window_s`` does not exceed the clip duration.
    """
    count = n_windows(n_samples, sample_rate, cfg)
    starts = np.round(np.arange(count) * (cfg.hop_s * sample_rate)).astype(np.int64)
    return starts, int(round(cfg.window_s * sample_rate))


def frame_densities(clip: AudioClip, model: SpeciesModel,
                    spec_cfg: SpectrogramConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame GMM density (0 for silent frames) and frame start samples."""
    pmf = spectrogram(clip, spec_cfg)
    dens = np.zeros(pmf.n_frames)
    valid = np.nonzero(pmf.valid)[0]
    if valid.size:
        feats, _ = features_matrix(pmf.frames[valid], pmf.bin_freqs_hz)
        dens[valid] = model.density(model.feature_set.select(feats))
    return dens, pmf.frame_starts


def _model_spectrogram_config(model: SpeciesModel) -> SpectrogramConfig:
    stored = model.provenance.get("spectrogram_config")
    return SpectrogramConfig(**stored) if stored else SpectrogramConfig()


def average_windows(values: np.ndarray, frame_starts: np.ndarray, starts: np.ndarray,
                    length: int, average: str = "arithmetic") -> np.ndarray:
    """Mean of ``values`` over frames whose start lies in [start, start + length)."""
    lo = np.searchsorted(frame_starts, starts, side="left")
    hi = np.searchsorted(frame_starts, starts + length, side="left")
    out = np.zeros(starts.size)
    for w, (a, b) in enumerate(zip(lo, hi)):
        if b <= a:
            continue
        chunk = values[a:b]
        if average == "arithmetic":
            out[w] = chunk.mean()
        elif np.all(chunk > 0):
            out[w] = math.exp(np.log(chunk).mean())
    return out


def score_trace(clip: AudioClip, model: SpeciesModel, cfg: DetectionConfig = DetectionConfig(),
                spec_cfg: SpectrogramConfig | None = None) -> DetectionTrace:
    """Average per-frame GMM densities over sliding windows.

    Every frame is kept (no power selection). Features are restricted to the
    model's feature set and standardised with the model's training
    statistics. By default the spectrogram settings recorded at training
    time are reused.
    """
    if spec_cfg is None:
        spec_cfg = _model_spectrogram_config(model)
    if model.gmm.d != len(model.feature_set) or model.standardizer.dim != len(model.feature_set):
        raise ValueError(f"model {model.model_id} is inconsistent with its feature set")

    starts, length = window_starts(len(clip), clip.sample_rate, cfg)
    dens, frame_starts = frame_densities(clip, model, spec_cfg)
    scores = average_windows(dens, frame_starts, starts, length, cfg.average)
    return DetectionTrace(
        times_s=starts / clip.sample_rate,
        scores=scores,
        window_s=cfg.window_s,
        hop_s=cfg.hop_s,
        model_id=model.model_id,
        window_starts=starts,
        window_length=length,
        sample_rate=clip.sample_rate,
        frame_densities=dens,
    )
