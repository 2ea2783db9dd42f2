import numpy as np
import pytest

from birdnovelty.audio_io import AudioClip
from birdnovelty.detector import score_trace
from birdnovelty.evaluation import ExperimentSummary, SummaryCell

pytest.importorskip("matplotlib")
from birdnovelty.plotting import plot_summary, plot_trace  # noqa: E402


def test_trace_figure_is_reproducible(tmp_path, mode_model):
    fs = 22050
    x = np.sin(2 * np.pi * 3000 * np.arange(fs * 2) / fs) * np.random.default_rng(0).uniform(0.5, 1, fs * 2)
    clip = AudioClip(x, fs)
    trace = score_trace(clip, mode_model)
    plot_trace(clip, trace, tmp_path / "a.svg", bird_interval=(0.5, 1.0))
    plot_trace(clip, trace, tmp_path / "b.svg", bird_interval=(0.5, 1.0))
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
    plot_trace(clip, trace, tmp_path / "c.png")
    assert (tmp_path / "c.png").stat().st_size > 0


def test_summary_figure(tmp_path):
    cells = [SummaryCell("wren", "[5]", c, 0.9, 0.8, 0.95, 3, 2, [0.8, 0.9, 0.95]) for c in ("p+3dB", "p-3dB")]
    plot_summary(ExperimentSummary(cells, ["p+3dB", "p-3dB"]), tmp_path / "s.svg")
    assert (tmp_path / "s.svg").read_text().startswith("<?xml")
