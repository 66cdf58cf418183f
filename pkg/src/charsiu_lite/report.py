"""Figure and table rendering for training runs.

Uses the Agg backend and writes PNGs with fixed metadata so identical runs
produce byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .core import FrameMatrix

# Fixed PNG metadata keeps output bytes independent of the library version
# string that would otherwise be embedded.
_PNG_METADATA = {"Software": "charsiu-lite"}


def _save(fig, path) -> None:
    fig.savefig(path, format="png", dpi=100, metadata=_PNG_METADATA)
    plt.close(fig)


def plot_history(history, path, title: str = "training history") -> None:
    """Loss curves and diagonality against the step counter."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    if history:
        steps = [h["step"] for h in history]
        ax1.plot(steps, [h["loss_m"] for h in history], label="contrastive")
        ax1.plot(steps, [h["loss_fs"] for h in history], label="forward-sum")
        ax2.plot(steps, [h["diagonality"] for h in history], color="tab:green")
        ax1.legend(loc="upper right")
    ax1.set_ylabel("loss")
    ax1.set_title(title)
    ax2.set_ylabel("diagonality")
    ax2.set_xlabel("step")
    ax2.set_ylim(0.0, 1.05)
    fig.tight_layout()
    _save(fig, path)


def plot_attention(A, path, title: str = "attention") -> None:
    """Heatmap of an attention matrix (phone positions over frames)."""
    v = np.asarray(A.values if isinstance(A, FrameMatrix) else A)
    fig, ax = plt.subplots(figsize=(7, 3))
    im = ax.imshow(v, aspect="auto", origin="lower", interpolation="nearest")
    ax.set_xlabel("frame")
    ax.set_ylabel("phone position")
    ax.set_title(title)
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    _save(fig, path)


def plot_ablation(rows, path) -> None:
    """Bar chart of mean final diagonality and boundary F1 per configuration."""
    names = [r["config"] for r in rows]
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(7, 3.5))
    width = 0.38
    ax.bar(x - width / 2, [r["diagonality"] for r in rows], width, label="diagonality")
    ax.bar(x + width / 2, [r["boundary_f1"] for r in rows], width, label="boundary F1")
    ax.set_xticks(x)
    ax.set_xticklabels(names)
    ax.set_ylim(0.0, 1.05)
    ax.legend(loc="lower left")
    ax.set_title("ablation summary (means over seeds)")
    fig.tight_layout()
    _save(fig, path)


def write_summary_tsv(rows, path, columns) -> None:
    """Tab-separated summary: one row per dict, floats with 6 decimals."""
    lines = ["\t".join(columns)]
    for row in rows:
        cells = []
        for c in columns:
            v = row[c]
            cells.append(f"{v:.6f}" if isinstance(v, float) else str(v))
        lines.append("\t".join(cells))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
