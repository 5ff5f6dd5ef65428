"""Figure rendering for segmentation runs.

Renders the observation channels with the predicted (and optionally the
reference) mode bands underneath, plus the EM log-likelihood trace when one
is available.  Everything is written to image files; nothing is shown
interactively.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .composite import ObservationSequence

_BAND_CMAP = "tab10"


def _mode_band(ax, modes: np.ndarray, n_modes: int, label: str) -> None:
    ax.imshow(modes[None, :], aspect="auto", interpolation="nearest",
              cmap=_BAND_CMAP, vmin=-0.5, vmax=max(9.5, n_modes - 0.5),
              extent=(1, modes.size + 1, 0, 1))
    ax.set_yticks([])
    ax.set_ylabel(label, rotation=0, ha="right", va="center")


def render_segmentation(seq: ObservationSequence, pred: np.ndarray,
                        truth: np.ndarray | None, out_path) -> None:
    """Channel traces over mode bands, written to ``out_path``."""
    pred = np.asarray(pred, dtype=int)
    n_bands = 1 + (truth is not None)
    n_modes = int(pred.max()) + 1
    if truth is not None:
        truth = np.asarray(truth, dtype=int)
        n_modes = max(n_modes, int(truth.max()) + 1)
    fig, axes = plt.subplots(
        1 + n_bands, 1, figsize=(9, 4.5 + 0.4 * n_bands), sharex=True,
        gridspec_kw={"height_ratios": [8] + [1] * n_bands})
    steps = np.arange(seq.values.shape[0])
    for name, col in zip(seq.layout.channel_names(), seq.values.T):
        axes[0].plot(steps, col, lw=1.0, label=name)
    axes[0].set_ylabel("channels")
    if seq.layout.width <= 8:
        axes[0].legend(loc="upper right", fontsize="small", ncols=2)
    band_axes = axes[1:]
    _mode_band(band_axes[0], pred, n_modes, "predicted")
    if truth is not None:
        _mode_band(band_axes[1], truth, n_modes, "reference")
    band_axes[-1].set_xlabel("step")
    fig.suptitle(seq.name or "sequence")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_loglik_trace(trace: np.ndarray, out_path) -> None:
    """EM log-likelihood against iteration, written to ``out_path``."""
    trace = np.asarray(trace, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(np.arange(trace.size), trace, marker="o", ms=3)
    ax.set_xlabel("iteration")
    ax.set_ylabel("log-likelihood")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
