"""WAV ingestion and deterministic synthetic test signals.

Clips keep their native sample rate; nothing here resamples.
"""
from __future__ import annotations

import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

# Synthetic generators round onto this PCM grid so that mixing stays exact
# (see evaluation.mix_at_snr).
SYNTH_BITS = 24


class AudioFormatError(ValueError):
    """Raised for WAV files that cannot be decoded into an AudioClip."""


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono sample buffer with its sample rate.

    ``samples`` is stored as a read-only float64 array with nominal range
    [-1, 1].
    """

    samples: np.ndarray
    sample_rate: int
    source_id: str = field(default="", compare=False)

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64).ravel()
        if samples.size == 0:
            raise AudioFormatError("zero-length audio")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate!r}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_seconds(self) -> float:
        return self.samples.size / self.sample_rate

    def with_samples(self, samples, source_id: str | None = None) -> "AudioClip":
        return AudioClip(samples, self.sample_rate, self.source_id if source_id is None else source_id)


def _to_float(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        # scipy left-justifies 24-bit PCM into int32, so one scale covers both
        return data.astype(np.float64) / 2147483648.0
    if data.dtype in (np.float32, np.float64):
        return data.astype(np.float64)
    raise AudioFormatError(f"unsupported sample encoding {data.dtype}")


def load_audio(path) -> AudioClip:
    """Decode a PCM WAV file into a mono :class:`AudioClip`.

    Stereo input is mixed down by averaging the two channels. Integer
    samples are scaled to [-1, 1]; the sample rate is preserved.
    """
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except (ValueError, EOFError, OSError) as exc:
        raise AudioFormatError(f"{path}: unreadable WAV ({exc})") from exc

    samples = _to_float(data)
    if samples.ndim == 2:
        if samples.shape[1] not in (1, 2):
            raise AudioFormatError(f"{path}: unsupported channel count {samples.shape[1]}")
        samples = samples.mean(axis=1)
    if samples.size == 0:
        raise AudioFormatError(f"{path}: zero-length audio")
    return AudioClip(samples, rate, source_id=path.stem)


def save_wav(clip: AudioClip, path, bit_depth: int = 16) -> Path:
    """Write ``clip`` as a mono little-endian PCM WAV.

    ``bit_depth`` is 8, 16 or 24 for integer PCM, or 32 for IEEE float.
    Integer output is rounded to the nearest code and clipped to range.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    x = clip.samples
    if bit_depth == 32:
        wavfile.write(path, clip.sample_rate, x.astype(np.float32))
        return path

    if bit_depth == 8:
        codes = np.clip(np.round(x * 128.0) + 128, 0, 255).astype(np.uint8)
        raw = codes.tobytes()
    elif bit_depth == 16:
        codes = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
        raw = codes.tobytes()
    elif bit_depth == 24:
        codes = np.clip(np.round(x * 8388608.0), -8388608, 8388607).astype("<i4")
        raw = codes.view(np.uint8).reshape(-1, 4)[:, :3].tobytes()
    else:
        raise ValueError(f"unsupported bit depth {bit_depth}")

    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(bit_depth // 8)
        wf.setframerate(clip.sample_rate)
        wf.writeframes(raw)
    return path


def quantize(samples, bits: int = SYNTH_BITS) -> np.ndarray:
    """Round samples onto the ``bits``-bit PCM grid (values stay float)."""
    scale = float(2 ** (bits - 1))
    return np.round(np.asarray(samples, dtype=np.float64) * scale) / scale


def synth_tone(freq: float, duration: float, sample_rate: int, amplitude: float = 1.0,
               phase: float = 0.0) -> AudioClip:
    """Sinusoid of the given frequency, deterministic to the sample."""
    if not 0 < freq < sample_rate / 2:
        raise ValueError(f"frequency {freq} Hz must lie in (0, Nyquist={sample_rate / 2} Hz)")
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    samples = quantize(amplitude * np.sin(2 * np.pi * freq * t + phase))
    return AudioClip(samples, sample_rate, source_id=f"tone{freq:g}Hz")
