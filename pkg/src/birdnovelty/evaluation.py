"""Synthetic-mixture evaluation: SNR-controlled mixing, window labels, ROC/AUC.

A test signal is a background recording with one bird clip added at a
random offset. Windows are labelled positive when the bird interval covers
a strict majority of them, scored by the species model, and summarised by
the area under the ROC curve. Repetitions are aggregated by nearest-rank
median and quartiles.
"""
from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .audio_io import AudioClip
from .detector import DetectionConfig, score_trace, window_starts
from .features import nearest_rank
from .trainer import SpeciesModel

logger = logging.getLogger(__name__)

# The scaled bird is rounded onto this dyadic grid. Any background on a
# coarser grid (all integer PCM up to 32 bits) then mixes without rounding,
# so subtracting the scaled bird gives back the background bit for bit.
MIX_GRID_BITS = 32


class SingleClassError(ValueError):
    """AUC is undefined because only one class is present."""


@dataclass(frozen=True)
class MixSpec:
    background_id: str
    bird_id: str
    snr_db: float
    insert_offset_s: float
    seed: object


@dataclass(frozen=True, eq=False)
class TestSignal:
    __test__ = False  # not a pytest class

    clip: AudioClip
    bird_interval: tuple
    applied_gain: float
    spec: MixSpec
    scaled_bird: np.ndarray
    offset: int
    output_scale: float = 1.0

    @property
    def bird_slice(self) -> slice:
        return slice(self.offset, self.offset + self.scaled_bird.size)


@dataclass(frozen=True, eq=False)
class RocResult:
    auc: float
    roc_points: np.ndarray
    n_pos: int
    n_neg: int


def rms(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.sqrt(np.mean(x * x)))


def mix_at_snr(background: AudioClip, bird: AudioClip, snr_db: float, seed=0,
               normalize: bool = False) -> TestSignal:
    """Add ``bird`` into ``background`` at a random offset and a target SNR.

    SNR compares the RMS of the scaled bird with the RMS of the background
    over the insertion interval only. With ``normalize`` the mixture is
    scaled to unit peak and the scale is folded into ``applied_gain``.
    """
    if background.sample_rate != bird.sample_rate:
        raise ValueError(
            f"sample-rate mismatch: background {background.sample_rate} Hz, bird {bird.sample_rate} Hz"
        )
    if not np.isfinite(snr_db):
        raise ValueError("snr_db must be finite")
    m, n = len(bird), len(background)
    if m > n:
        raise ValueError(
            f"bird ({bird.duration_seconds:.2f} s) longer than background ({background.duration_seconds:.2f} s)"
        )
    rng = np.random.default_rng(seed)
    offset = int(rng.integers(0, n - m + 1))
    segment = background.samples[offset:offset + m]
    bg_rms, bird_rms = rms(segment), rms(bird.samples)
    if bg_rms == 0 or bird_rms == 0:
        raise ValueError("SNR undefined: silent bird clip or silent background segment")

    gain = 10.0 ** (snr_db / 20.0) * bg_rms / bird_rms
    grid = float(2 ** MIX_GRID_BITS)
    scaled = np.round(gain * bird.samples * grid) / grid
    mixed = background.samples.copy()
    mixed[offset:offset + m] += scaled

    scale = 1.0
    if normalize:
        peak = float(np.max(np.abs(mixed)))
        if peak > 0:
            scale = 1.0 / peak
            mixed *= scale

    fs = background.sample_rate
    spec = MixSpec(background.source_id, bird.source_id, float(snr_db), offset / fs, seed)
    return TestSignal(
        clip=AudioClip(mixed, fs, source_id=f"{background.source_id}+{bird.source_id}"),
        bird_interval=(offset / fs, (offset + m) / fs),
        applied_gain=gain * scale,
        spec=spec,
        scaled_bird=scaled,
        offset=offset,
        output_scale=scale,
    )


def label_windows(ts: TestSignal, cfg: DetectionConfig = DetectionConfig()) -> np.ndarray:
    """True for windows that the bird interval covers by a strict majority."""
    starts, length = window_starts(len(ts.clip), ts.clip.sample_rate, cfg)
    b0, b1 = ts.offset, ts.offset + ts.scaled_bird.size
    overlap = np.clip(np.minimum(starts + length, b1) - np.maximum(starts, b0), 0, None)
    return 2 * overlap > length


def roc_auc(scores, labels) -> RocResult:
    """ROC curve over all score thresholds and its trapezoidal area.

    Tied scores form a single step, giving a diagonal segment (half credit).
    The area is accumulated in integer counts before one final division.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=bool).ravel()
    if s.size != y.size:
        raise ValueError("scores and labels differ in length")
    if np.isnan(s).any():
        raise ValueError("NaN score")
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("AUC undefined: need at least one positive and one negative label")

    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tp = np.r_[0, np.cumsum(y, dtype=np.int64)[last]]
    fp = np.r_[0, np.cumsum(~y, dtype=np.int64)[last]]
    twice_area = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    auc = twice_area / (2 * n_pos * n_neg)
    points = np.column_stack([fp / n_neg, tp / n_pos])
    return RocResult(auc=auc, roc_points=points, n_pos=n_pos, n_neg=n_neg)


@dataclass(frozen=True)
class Condition:
    tag: str
    snr_db: float

    @property
    def label(self) -> str:
        return f"{self.tag}{self.snr_db:+g}dB"

    @classmethod
    def parse(cls, text) -> "Condition":
        """``"park:3"`` or ``("park", 3)``."""
        if isinstance(text, Condition):
            return text
        if isinstance(text, str):
            tag, _, snr = text.rpartition(":")
            if not tag:
                raise ValueError(f"condition must look like TAG:SNR_DB, got {text!r}")
            return cls(tag, float(snr))
        tag, snr = text
        return cls(str(tag), float(snr))


@dataclass
class SummaryCell:
    species: str
    feature_set: str
    condition: str
    median: float
    p25: float
    p75: float
    n_reps: int
    selected_k: int
    aucs: list = field(default_factory=list)


@dataclass
class ExperimentSummary:
    cells: list
    conditions: list
    provenance: dict = field(default_factory=dict)

    def cell(self, species: str, feature_set: str, condition: str) -> SummaryCell:
        for c in self.cells:
            if (c.species, c.feature_set, c.condition) == (species, feature_set, condition):
                return c
        raise KeyError((species, feature_set, condition))

    def table_rows(self) -> list[list[str]]:
        """Summary grid: rows per species, columns per feature set.

        Each species contributes an ``auc`` row of ``m1-m2-m3`` medians and a
        ``K`` row of selected component counts, one entry per condition.
        """
        species = list(dict.fromkeys(c.species for c in self.cells))
        fsets = list(dict.fromkeys(c.feature_set for c in self.cells))
        rows = [["species", "row"] + fsets]
        for sp in species:
            auc_row, k_row = [sp, "auc"], [sp, "K"]
            for fs in fsets:
                cells = [self.cell(sp, fs, cond) for cond in self.conditions]
                auc_row.append("-".join(f"{c.median:.2f}" for c in cells))
                k_row.append("-".join(str(c.selected_k) for c in cells))
            rows += [auc_row, k_row]
        return rows


def summarize(aucs: Sequence[float]) -> tuple[float, float, float]:
    """Nearest-rank (p25, median, p75)."""
    return nearest_rank(aucs, 25), nearest_rank(aucs, 50), nearest_rank(aucs, 75)


def _stable_key(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "little")


def repetition_seed(master_seed: int, species: str, condition: Condition, rep: int, attempt: int):
    # keyed by background tag, not SNR: conditions sharing a corpus see the
    # same background, bird clip and offset, differing only in gain
    return [int(master_seed), _stable_key(species), _stable_key(condition.tag), rep, attempt]


_WORKER: dict = {}


def _init_worker(state):
    _WORKER.update(state)


def _run_repetition(task):
    species, cond, rep = task
    st = _WORKER
    models = st["models"][cond.label][species]
    backgrounds = st["backgrounds"][cond.tag]
    birds = st["birds"][species]
    for attempt in range(st["max_redraws"] + 1):
        rng = np.random.default_rng(repetition_seed(st["master_seed"], species, cond, rep, attempt))
        bg = backgrounds[int(rng.integers(len(backgrounds)))]
        bird = birds[int(rng.integers(len(birds)))]
        ts = mix_at_snr(bg, bird, cond.snr_db, seed=int(rng.integers(2 ** 63)))
        labels = label_windows(ts, st["det_cfg"])
        if labels.all() or not labels.any():
            logger.warning("%s %s rep %d: single-class labels, redrawing", species, cond.label, rep)
            continue
        return [roc_auc(score_trace(ts.clip, m, st["det_cfg"]).scores, labels).auc for m in models]
    raise SingleClassError(
        f"{species} {cond.label} rep {rep}: single-class labels after {st['max_redraws']} redraws"
    )


def run_experiment(models, backgrounds: Mapping[str, Sequence[AudioClip]],
                   birds: Mapping[str, Sequence[AudioClip]], conditions, reps: int = 50,
                   master_seed: int = 0, det_cfg: DetectionConfig = DetectionConfig(),
                   jobs: int = 1, max_redraws: int = 5) -> ExperimentSummary:
    """Median/IQR of AUC per (species, feature set, condition) over repetitions.

    ``models`` is a list of :class:`SpeciesModel` shared by all conditions,
    or a mapping from condition label to such a list (one training draw per
    condition). For a given species, condition and repetition every feature
    set is scored on the same test signal.
    """
    conds = [Condition.parse(c) for c in conditions]
    if not conds:
        raise ValueError("no conditions given")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if isinstance(models, Mapping):
        per_cond = {c.label: list(models[c.label]) for c in conds}
    else:
        per_cond = {c.label: list(models) for c in conds}

    grouped: dict[str, dict[str, list[SpeciesModel]]] = {}
    species_order: list[str] = []
    for label, ms in per_cond.items():
        grouped[label] = {}
        for m in ms:
            grouped[label].setdefault(m.species_id, []).append(m)
            if m.species_id not in species_order:
                species_order.append(m.species_id)
    for sp in species_order:
        if not birds.get(sp):
            raise ValueError(f"no bird clips for species {sp!r}")
    for c in conds:
        if not backgrounds.get(c.tag):
            raise ValueError(f"no background recordings for condition tag {c.tag!r}")
        for sp in species_order:
            if sp not in grouped[c.label]:
                raise ValueError(f"no model for species {sp!r} under condition {c.label}")

    state = {
        "models": grouped,
        "backgrounds": {c.tag: list(backgrounds[c.tag]) for c in conds},
        "birds": {sp: list(birds[sp]) for sp in species_order},
        "master_seed": master_seed,
        "det_cfg": det_cfg,
        "max_redraws": max_redraws,
    }
    tasks = [(sp, c, r) for sp in species_order for c in conds for r in range(reps)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(state,)) as ex:
            results = list(ex.map(_run_repetition, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        _init_worker(state)
        results = [_run_repetition(t) for t in tasks]
    _WORKER.clear()

    by_task = dict(zip(tasks, results))
    cells = []
    for sp in species_order:
        n_models = len(grouped[conds[0].label][sp])
        for i in range(n_models):
            for c in conds:
                model = grouped[c.label][sp][i]
                aucs = [by_task[(sp, c, r)][i] for r in range(reps)]
                p25, med, p75 = summarize(aucs)
                cells.append(SummaryCell(sp, model.feature_set.label, c.label, med, p25, p75,
                                         reps, model.selected_k, aucs))
    provenance = {
        "master_seed": master_seed,
        "reps": reps,
        "condition_specs": [{"tag": c.tag, "snr_db": c.snr_db} for c in conds],
        "detection_config": det_cfg.to_dict(),
        "snr_convention": "bird RMS vs background RMS over the insertion interval",
        "label_rule": "positive iff bird overlap > half the window",
    }
    return ExperimentSummary(cells=cells, conditions=[c.label for c in conds], provenance=provenance)
