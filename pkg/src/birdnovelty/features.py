"""Band-limited pmf spectrogram frames and spectral-statistic features.

Every spectrogram frame is restricted to a frequency band, normalised to
unit sum and summarised by six statistics of the resulting pmf over
frequency: mean, standard deviation, skewness, kurtosis, mode and spectral
flatness.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

from .audio_io import AudioClip

FEATURE_NAMES = ("mean", "std", "skewness", "kurtosis", "mode", "sfm")

SFM_FLOOR = 1e-12
DEGENERATE_STD_FRACTION = 1e-9


@dataclass(frozen=True)
class SpectrogramConfig:
    frame_length_s: float = 0.020
    overlap_fraction: float = 0.5
    min_bin_spacing_hz: float = 93.0
    band_low_hz: float = 1000.0
    band_high_hz: float = 10000.0
    window: str = "hann"

    def __post_init__(self):
        if not 0 <= self.overlap_fraction < 1:
            raise ValueError("overlap_fraction must lie in [0, 1)")
        if self.frame_length_s <= 0 or self.min_bin_spacing_hz <= 0 or self.band_low_hz <= 0:
            raise ValueError("frame length, bin spacing and band edges must be positive")
        if self.band_low_hz >= self.band_high_hz:
            raise ValueError("band_low_hz must be below band_high_hz")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class FeatureSet:
    """Active subset of the six features, as 1-based indices in given order."""

    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise ValueError("feature set must not be empty")
        if len(set(idx)) != len(idx) or not all(1 <= i <= len(FEATURE_NAMES) for i in idx):
            raise ValueError(f"invalid feature indices {idx}")
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def columns(self) -> list[int]:
        return [i - 1 for i in self.indices]

    @property
    def names(self) -> list[str]:
        return [FEATURE_NAMES[c] for c in self.columns]

    @property
    def label(self) -> str:
        return "[" + " ".join(str(i) for i in self.indices) + "]"

    @classmethod
    def parse(cls, text) -> "FeatureSet":
        """Accept ``"[5 2]"``, ``"5,2"``, ``"mode,std"`` or a sequence."""
        if isinstance(text, FeatureSet):
            return text
        if isinstance(text, str):
            tokens = text.strip().strip("[]").replace(",", " ").split()
        else:
            tokens = list(text)
        idx = []
        for tok in tokens:
            if isinstance(tok, str) and tok in FEATURE_NAMES:
                idx.append(FEATURE_NAMES.index(tok) + 1)
            else:
                idx.append(int(tok))
        return cls(tuple(idx))

    def select(self, features: np.ndarray) -> np.ndarray:
        return np.asarray(features)[:, self.columns]


# The eight standard feature combinations (used by --all-feature-sets).
CATALOGUED_FEATURE_SETS = tuple(
    FeatureSet(ix)
    for ix in [(1,), (5,), (1, 2), (5, 2), (1, 2, 6), (5, 2, 6), (1, 2, 3, 4), (1, 2, 3, 4, 5, 6)]
)
MODE_ONLY = CATALOGUED_FEATURE_SETS[1]


@dataclass(frozen=True, eq=False)
class PmfFrames:
    """Unit-sum spectrogram frames over the analysis band.

    Rows whose band power is exactly zero stay all-zero and are marked
    invalid; they never produce feature rows.
    """

    frames: np.ndarray
    bin_freqs_hz: np.ndarray
    frame_hop_s: float
    frame_total_power: np.ndarray
    frame_length: int
    frame_hop: int
    n_fft: int
    sample_rate: int

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def valid(self) -> np.ndarray:
        return self.frame_total_power > 0

    @property
    def frame_starts(self) -> np.ndarray:
        """Frame start positions in samples."""
        return np.arange(self.n_frames) * self.frame_hop


@dataclass(frozen=True)
class FeatureVector:
    mean: float
    std: float
    skewness: float
    kurtosis: float
    mode: float
    sfm: float
    degenerate: bool = False

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FEATURE_NAMES])


def fft_length(sample_rate: float, cfg: SpectrogramConfig = SpectrogramConfig()) -> int:
    """Largest power of two N with ``sample_rate / N >= min_bin_spacing_hz``."""
    if sample_rate / 2 < cfg.min_bin_spacing_hz:
        raise ValueError(
            f"sample rate {sample_rate} Hz too low for {cfg.min_bin_spacing_hz} Hz bin spacing"
        )
    n = 2
    while sample_rate / (2 * n) >= cfg.min_bin_spacing_hz:
        n *= 2
    return n


def spectrogram(clip: AudioClip, cfg: SpectrogramConfig = SpectrogramConfig()) -> PmfFrames:
    """Band-limited power spectrogram of ``clip`` with rows normalised to pmfs.

    Frames of ``frame_length_s`` are windowed, then cut (centred) or
    zero-padded to the FFT length so the bin spacing is set by
    :func:`fft_length` rather than by the frame duration.
    """
    fs = clip.sample_rate
    n_fft = fft_length(fs, cfg)
    frame_len = int(round(cfg.frame_length_s * fs))
    hop = max(1, int(round(frame_len * (1 - cfg.overlap_fraction))))
    x = clip.samples
    if frame_len < 1 or x.size < frame_len:
        raise ValueError(
            f"clip of {x.size} samples is shorter than one {frame_len}-sample frame"
        )

    freqs = np.fft.rfftfreq(n_fft, 1.0 / fs)
    band = (freqs >= cfg.band_low_hz) & (freqs <= cfg.band_high_hz)
    if not band.any():
        raise ValueError(
            f"no FFT bins inside [{cfg.band_low_hz}, {cfg.band_high_hz}] Hz at {fs} Hz"
        )

    frames = sliding_window_view(x, frame_len)[::hop] * get_window(cfg.window, frame_len)
    if frame_len > n_fft:
        start = (frame_len - n_fft) // 2
        frames = frames[:, start:start + n_fft]
    power = np.abs(np.fft.rfft(frames, n=n_fft, axis=1)[:, band]) ** 2

    total = power.sum(axis=1)
    pmf = np.zeros_like(power)
    nz = total > 0
    pmf[nz] = power[nz] / total[nz, None]
    return PmfFrames(
        frames=pmf,
        bin_freqs_hz=freqs[band],
        frame_hop_s=hop / fs,
        frame_total_power=total,
        frame_length=frame_len,
        frame_hop=hop,
        n_fft=n_fft,
        sample_rate=fs,
    )


def _mode_interp_rows(frames: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    n_bins = freqs.size
    k = np.argmax(frames, axis=1)
    mode = freqs[k].astype(np.float64)
    inner = (k > 0) & (k < n_bins - 1)
    if not inner.any():
        return mode
    rows = np.nonzero(inner)[0]
    kk = k[rows]
    x0, x1, x2 = freqs[kk - 1], freqs[kk], freqs[kk + 1]
    y0, y1, y2 = frames[rows, kk - 1], frames[rows, kk], frames[rows, kk + 1]
    # vertex of the parabola through three (possibly unevenly spaced) points
    num = (x1 - x0) ** 2 * (y1 - y2) - (x1 - x2) ** 2 * (y1 - y0)
    den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0)
    with np.errstate(divide="ignore", invalid="ignore"):
        vertex = x1 - 0.5 * num / den
    vertex = np.where(den != 0, vertex, x1)
    mode[rows] = np.clip(vertex, x0, x2)
    return mode


def mode_interp(frame, bin_freqs) -> float:
    """Frequency of the pmf maximum refined by a three-point parabola.

    The parabola passes through the maximum bin and both neighbours; its
    vertex is clamped to the neighbours' span. A maximum on the first or
    last bin returns that bin's centre.
    """
    frame = np.atleast_2d(np.asarray(frame, dtype=np.float64))
    return float(_mode_interp_rows(frame, np.asarray(bin_freqs, dtype=np.float64))[0])


def features_matrix(frames, bin_freqs) -> tuple[np.ndarray, np.ndarray]:
    """Six features for every row of ``frames``.

    Returns
    -------
    features : ndarray, shape (n, 6)
        Columns ordered as :data:`FEATURE_NAMES`.
    degenerate : ndarray of bool, shape (n,)
        Rows whose spread is negligible; their skewness and kurtosis are
        reported as 0.
    """
    p = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    f = np.asarray(bin_freqs, dtype=np.float64)
    if p.shape[1] != f.size:
        raise ValueError("frame and bin_freqs lengths differ")
    if f.size < 3:
        raise ValueError("need at least 3 frequency bins")

    mean = p @ f
    dev = f[None, :] - mean[:, None]
    dev2 = dev * dev
    m2 = np.sum(p * dev2, axis=1)
    m3 = np.sum(p * dev2 * dev, axis=1)
    m4 = np.sum(p * dev2 * dev2, axis=1)
    std = np.sqrt(m2)

    degenerate = std < DEGENERATE_STD_FRACTION * (f[-1] - f[0])
    safe_std = np.where(degenerate, 1.0, std)
    skew = np.where(degenerate, 0.0, m3 / safe_std ** 3)
    kurt = np.where(degenerate, 0.0, m4 / safe_std ** 4)

    log_geo = np.mean(np.log(np.maximum(p, SFM_FLOOR)), axis=1)
    sfm = np.clip(np.exp(log_geo) / np.mean(p, axis=1), 0.0, 1.0)

    mode = _mode_interp_rows(p, f)
    return np.column_stack([mean, std, skew, kurt, mode, sfm]), degenerate


def frame_features(frame, bin_freqs) -> FeatureVector:
    """Features of a single pmf frame."""
    feats, degenerate = features_matrix(frame, bin_freqs)
    return FeatureVector(*(float(v) for v in feats[0]), degenerate=bool(degenerate[0]))


def select_training_frames(pmf) -> np.ndarray:
    """Indices of frames at or above the nearest-rank 90th power percentile.

    ``pmf`` is a :class:`PmfFrames` or a vector of frame powers. Zero-power
    frames are never returned.
    """
    power = np.asarray(pmf.frame_total_power if isinstance(pmf, PmfFrames) else pmf, dtype=float)
    n = power.size
    if n < 10:
        raise ValueError(f"need at least 10 frames for percentile selection, got {n}")
    threshold = nearest_rank(power, 90)
    return np.nonzero((power >= threshold) & (power > 0))[0]


def nearest_rank(values, percent: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("percentile of empty sequence")
    rank = max(1, math.ceil(percent / 100.0 * v.size))
    return float(v[rank - 1])


def clip_features(clip: AudioClip, cfg: SpectrogramConfig = SpectrogramConfig(),
                  select: bool = False) -> tuple[np.ndarray, np.ndarray, PmfFrames]:
    """Featurise a clip.

    Returns the (n, 6) feature matrix, the frame indices its rows came from,
    and the underlying :class:`PmfFrames`. With ``select`` only the top-decile
    power frames are kept (training); otherwise every non-silent frame is.
    """
    pmf = spectrogram(clip, cfg)
    if select:
        idx = select_training_frames(pmf)
    else:
        idx = np.nonzero(pmf.valid)[0]
    feats, _ = features_matrix(pmf.frames[idx], pmf.bin_freqs_hz) if idx.size else (
        np.empty((0, len(FEATURE_NAMES))), None)
    return feats, idx, pmf


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Per-dimension affine map to zero mean and unit standard deviation."""

    offset: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=np.float64))
        object.__setattr__(self, "scale", np.asarray(self.scale, dtype=np.float64))
        if self.offset.shape != self.scale.shape or self.offset.ndim != 1:
            raise ValueError("offset and scale must be 1-d of equal length")
        if not np.all(self.scale > 0):
            raise ValueError("standardizer scale must be positive")

    @property
    def dim(self) -> int:
        return self.offset.size

    def apply(self, features) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.offset) / self.scale

    def inverse(self, z) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.scale + self.offset


def fit_standardizer(features, names: Sequence[str] | None = None) -> Standardizer:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need a 2-d matrix with at least 2 rows")
    offset = x.mean(axis=0)
    scale = x.std(axis=0)
    bad = np.nonzero(~(scale > 0))[0]
    if bad.size:
        label = names[bad[0]] if names is not None else f"column {bad[0]}"
        raise ValueError(f"zero-variance training feature: {label}")
    return Standardizer(offset, scale)


def apply_standardizer(s: Standardizer, features) -> np.ndarray:
    return s.apply(features)

