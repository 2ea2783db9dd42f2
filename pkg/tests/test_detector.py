import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from birdnovelty.audio_io import AudioClip
from birdnovelty.detector import DetectionConfig, n_windows, score_trace, window_starts


def _noisy_tone(duration, fs, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(int(round(duration * fs))) / fs
    f = 3000 + 800 * np.sin(2 * np.pi * 0.7 * t)
    return AudioClip(np.sin(2 * np.pi * np.cumsum(f) / fs) + 0.3 * rng.standard_normal(t.size), fs)


def test_sixteen_windows_for_two_seconds():
    assert n_windows(44100 * 2, 44100, DetectionConfig()) == 16
    starts, length = window_starts(44100 * 2, 44100, DetectionConfig())
    assert length == 22050
    assert starts[-1] + length == 88200


def test_window_exactly_fits():
    assert n_windows(11025, 22050, DetectionConfig()) == 1
    with pytest.raises(ValueError):
        n_windows(11024, 22050, DetectionConfig())


@settings(max_examples=200, deadline=None)
@given(st.integers(11025, 22050 * 30), st.sampled_from([16000, 22050, 44100, 48000]))
def test_window_count_matches_rational_oracle(n, fs):
    if n < fs // 2:
        return
    assert n_windows(n, fs, DetectionConfig()) == oracles.window_count(n, fs)


def test_periodic_signal_gives_constant_trace(mode_model):
    fs = 22050
    period = np.sin(2 * np.pi * np.arange(10) / 10)  # 2205 Hz, 10 samples per cycle
    clip = AudioClip(np.tile(period, fs * 2 // 10), fs)
    trace = score_trace(clip, mode_model)
    frame_value = trace.frame_densities[0]
    assert frame_value > 0
    assert np.all(trace.frame_densities == frame_value)
    np.testing.assert_allclose(trace.scores, frame_value, rtol=1e-15)


def test_trace_matches_moving_average_oracle(mode_model):
    clip = _noisy_tone(3.0, 22050)
    trace = score_trace(clip, mode_model)
    hop = 220  # 10 ms at 22050 Hz
    expected = oracles.moving_average(trace.frame_densities.tolist(), hop, 22050, len(trace))
    np.testing.assert_allclose(trace.scores, expected, rtol=1e-12, atol=0)
    np.testing.assert_array_equal(trace.times_s, np.arange(len(trace)) * 2205 / 22050)


def test_amplitude_scaling_invariance(mode_model):
    clip = _noisy_tone(2.0, 44100, seed=3)
    base = score_trace(clip, mode_model).scores
    doubled = score_trace(clip.with_samples(clip.samples * 2.0), mode_model).scores
    np.testing.assert_array_equal(base, doubled)
    scaled = score_trace(clip.with_samples(clip.samples * 0.37), mode_model).scores
    np.testing.assert_allclose(scaled, base, rtol=1e-9)


def test_silent_frames_score_zero(mode_model):
    fs = 22050
    x = np.zeros(fs * 2)
    x[fs:] = np.sin(2 * np.pi * 3000 * np.arange(fs) / fs)
    trace = score_trace(AudioClip(x, fs), mode_model)
    assert trace.scores[0] == 0.0
    assert trace.scores[-1] > 0.0


def test_geometric_average_not_above_arithmetic(mode_model):
    clip = _noisy_tone(2.0, 22050, seed=1)
    arith = score_trace(clip, mode_model).scores
    geo = score_trace(clip, mode_model, DetectionConfig(average="geometric")).scores
    assert np.all(geo <= arith * (1 + 1e-12))


def test_short_clip_rejected(mode_model):
    with pytest.raises(ValueError):
        score_trace(AudioClip(np.ones(1000), 22050), mode_model)
