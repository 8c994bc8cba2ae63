"""Figure rendering for report outputs (Agg backend, deterministic PNGs)."""

from __future__ import annotations

import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from intentgraft.fileio import atomic_write_bytes

# Pinned so identical inputs produce checksum-identical PNGs.
_PNG_METADATA = {"Software": "intentgraft"}


def _save(fig, path: str | Path) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=120, bbox_inches="tight", metadata=_PNG_METADATA)
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def cooccurrence_heatmap(C: np.ndarray, inventory: tuple[str, ...], path: str | Path) -> None:
    n = len(inventory)
    fig, ax = plt.subplots(figsize=(max(6, 0.3 * n), max(5, 0.3 * n)))
    with np.errstate(divide="ignore"):
        shown = np.log10(np.maximum(C, 0) + 1)
    im = ax.imshow(shown, cmap="viridis", interpolation="nearest")
    ax.set_xticks(range(n))
    ax.set_yticks(range(n))
    ax.set_xticklabels(inventory, rotation=90, fontsize=6)
    ax.set_yticklabels(inventory, fontsize=6)
    ax.set_title("label co-occurrence (log10 count + 1)")
    fig.colorbar(im, ax=ax, fraction=0.046)
    _save(fig, path)


def cluster_scatter(
    coords: np.ndarray,
    assignment: np.ndarray,
    inventory: tuple[str, ...],
    path: str | Path,
) -> None:
    fig, ax = plt.subplots(figsize=(8, 6))
    clusters = sorted(set(int(c) for c in assignment))
    cmap = plt.get_cmap("tab20")
    for c in clusters:
        mask = assignment == c
        if c < 0:
            ax.scatter(coords[mask, 0], coords[mask, 1], c="lightgray", marker="x", label="noise")
        else:
            ax.scatter(coords[mask, 0], coords[mask, 1], color=cmap(c % 20), label=f"cluster {c}")
    for i, lab in enumerate(inventory):
        ax.annotate(lab, (coords[i, 0], coords[i, 1]), fontsize=6, alpha=0.8)
    ax.set_title("label clusters over co-occurrence distance")
    ax.legend(fontsize=7, loc="best")
    _save(fig, path)


def training_curves(history, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(history.epochs, history.train_loss, color="tab:red", label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("train loss", color="tab:red")
    ax2 = ax.twinx()
    ax2.plot(history.epochs, history.valid_f1, color="tab:blue", label="valid F1")
    ax2.set_ylabel("valid micro-F1", color="tab:blue")
    ax2.set_ylim(0.0, 1.05)
    ax.set_title("training history")
    _save(fig, path)
