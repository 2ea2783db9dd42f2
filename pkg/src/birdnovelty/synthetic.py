"""Deterministic synthetic corpora: FM chirp "songs" and noise backgrounds.

Used by the end-to-end tests and by ``birdnovelty synth`` to produce a
demo corpus. All outputs are rounded onto the 24-bit PCM grid.
"""
from __future__ import annotations

import numpy as np
from scipy.signal.windows import tukey

from .audio_io import AudioClip, quantize


def chirp_syllable(sample_rate: int, duration: float, f_start: float, f_stop: float,
                   amplitude: float = 1.0) -> np.ndarray:
    """Linear FM sweep with tapered onset and offset."""
    n = max(2, int(round(duration * sample_rate)))
    t = np.arange(n) / sample_rate
    phase = 2 * np.pi * (f_start * t + 0.5 * (f_stop - f_start) / duration * t ** 2)
    return amplitude * tukey(n, 0.3) * np.sin(phase)


def chirp_song(duration: float, sample_rate: int, rng: np.random.Generator,
               f_low: float = 3000.0, f_high: float = 6000.0, amplitude: float = 0.3,
               noise_floor: float = 0.003, duty: float = 0.5, dynamic_range_db: float = 30.0,
               source_id: str = "chirps") -> AudioClip:
    """Train of chirp syllables sweeping within [f_low, f_high] over white noise.

    Syllables last 60-140 ms with peak levels spread uniformly (in dB) over
    ``dynamic_range_db`` below ``amplitude``; the gaps are sized so that
    roughly ``duty`` of the clip is covered by syllables.
    """
    n = int(round(duration * sample_rate))
    x = noise_floor * rng.standard_normal(n)
    pos = int(rng.integers(0, int(0.05 * sample_rate) + 1))
    while True:
        syl_dur = rng.uniform(0.06, 0.14)
        m = int(round(syl_dur * sample_rate))
        if pos + m > n:
            break
        a, b = rng.uniform(f_low, f_high, size=2)
        level = amplitude * 10 ** (-rng.uniform(0, dynamic_range_db) / 20)
        x[pos:pos + m] += chirp_syllable(sample_rate, syl_dur, a, b, level)
        gap = syl_dur * (1 - duty) / duty * rng.uniform(0.6, 1.4)
        pos += m + int(round(gap * sample_rate))
    return AudioClip(quantize(x), sample_rate, source_id=source_id)


def _shaped_noise(n: int, sample_rate: int, rng: np.random.Generator, gain_fn) -> np.ndarray:
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / sample_rate)
    x = np.fft.irfft(spec * gain_fn(np.maximum(f, 1.0)), n=n)
    return x / np.sqrt(np.mean(x * x))


def pink_noise(duration: float, sample_rate: int, rng: np.random.Generator, level: float = 0.1,
               source_id: str = "pink") -> AudioClip:
    """1/f-power noise scaled to RMS ``level``."""
    n = int(round(duration * sample_rate))
    x = _shaped_noise(n, sample_rate, rng, lambda f: 1.0 / np.sqrt(f))
    return AudioClip(quantize(level * x), sample_rate, source_id=source_id)


def speech_shaped_noise(duration: float, sample_rate: int, rng: np.random.Generator,
                        level: float = 0.1, syllable_rate: float = 4.0,
                        source_id: str = "speech") -> AudioClip:
    """Noise with a speech-like long-term spectrum and syllabic modulation.

    Flat below 500 Hz, falling about 9 dB per octave above it, amplitude
    modulated at ``syllable_rate`` Hz with a random phase.
    """
    n = int(round(duration * sample_rate))
    x = _shaped_noise(n, sample_rate, rng, lambda f: np.where(f < 500.0, 1.0, (500.0 / f) ** 1.5))
    t = np.arange(n) / sample_rate
    env = 0.35 + 0.65 * np.abs(np.sin(np.pi * syllable_rate * t + rng.uniform(0, np.pi)))
    x = x * env
    x /= np.sqrt(np.mean(x * x))
    return AudioClip(quantize(level * x), sample_rate, source_id=source_id)


def training_corpus(n_recordings: int, duration: float, sample_rate: int, seed: int,
                    **song_kw) -> list[AudioClip]:
    """Independent chirp recordings, each from its own seeded stream."""
    return [
        chirp_song(duration, sample_rate, np.random.default_rng([seed, i]),
                   source_id=f"train{i:03d}", **song_kw)
        for i in range(n_recordings)
    ]
