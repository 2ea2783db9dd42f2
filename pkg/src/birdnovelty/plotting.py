"""Optional figures: waveform + detection trace, and AUC median/IQR per species.

Needs matplotlib (``pip install artifact[plot]``).
"""
from __future__ import annotations

from pathlib import Path

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    # fixed salt and no date so SVG output is reproducible
    matplotlib.rcParams["svg.hashsalt"] = "birdnovelty"
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path):
    path = Path(path)
    meta = {"Date": None} if path.suffix.lower() in (".svg", ".pdf") else {}
    fig.savefig(path, metadata=meta)


def plot_trace(clip, trace, path, bird_interval=None):
    """Waveform (grey), window scores at window centres, optional bird limits (dashed)."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(10, 3.5))
    t = np.arange(len(clip)) / clip.sample_rate
    ax.plot(t, clip.samples, color="0.7", lw=0.5)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("amplitude")
    if bird_interval is not None:
        for edge in bird_interval:
            ax.axvline(edge, color="k", ls="--", lw=1)
    ax2 = ax.twinx()
    ax2.plot(trace.times_s + trace.window_s / 2, trace.scores, color="k", lw=1.2)
    ax2.set_ylabel(f"mean GMM pdf ({trace.window_s * 1000:.0f} ms)")
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def plot_summary(summary, path):
    """One panel per feature set; per species the median AUC and 25-75% bar for each condition."""
    plt = _pyplot()
    species = list(dict.fromkeys(c.species for c in summary.cells))
    fsets = list(dict.fromkeys(c.feature_set for c in summary.cells))
    conds = summary.conditions
    greys = [str(v) for v in np.linspace(0.0, 0.75, max(len(conds), 1))]
    ncol = min(4, len(fsets))
    nrow = -(-len(fsets) // ncol)
    fig, axes = plt.subplots(nrow, ncol, figsize=(3.2 * ncol, 2.6 * nrow), squeeze=False, sharey=True)
    shift = 0.2 if len(conds) > 1 else 0.0
    for ax, fs in zip(axes.flat, fsets):
        for j, cond in enumerate(conds):
            x = np.arange(1, len(species) + 1) + (j - (len(conds) - 1) / 2) * shift
            cells = [summary.cell(sp, fs, cond) for sp in species]
            med = [c.median for c in cells]
            lo = [c.median - c.p25 for c in cells]
            hi = [c.p75 - c.median for c in cells]
            ax.errorbar(x, med, yerr=[lo, hi], fmt="o", mfc="none", color=greys[j], ms=4, label=cond)
        ax.set_title(fs)
        ax.set_ylim(0, 1.02)
        ax.set_xticks(range(1, len(species) + 1))
    for ax in axes.flat[len(fsets):]:
        ax.set_visible(False)
    axes.flat[0].set_ylabel("AUC")
    axes.flat[0].legend(fontsize="small")
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)
