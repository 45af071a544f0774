"""Report figures rendered to PNG files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .core import CLASSES  # noqa: E402

_META = {"Software": None}


def plot_hoover(tolerances, curves: dict, path, title: str = "Region metrics") -> None:
    """One line per Hoover category, in percent, against tolerance."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, values in curves.items():
        ax.plot(np.asarray(tolerances) * 100, np.asarray(values) * 100, label=name.replace("_", " "))
    ax.set_xlabel("tolerance (%)")
    ax.set_ylabel("regions (%)")
    ax.set_ylim(-2, 102)
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)


def plot_confusion(mean, std, path, classes=CLASSES) -> None:
    """Heat map of row-normalized confusion percentages with mean +- std labels."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 4.5))
    im = ax.imshow(mean, cmap="Blues", vmin=0, vmax=100)
    for i in range(mean.shape[0]):
        for j in range(mean.shape[1]):
            color = "white" if mean[i, j] > 60 else "black"
            ax.text(j, i, f"{mean[i, j]:.2f}\n±{std[i, j]:.2f}", ha="center", va="center",
                    fontsize=8, color=color)
    labels = [f"{c}-cell" for c in classes]
    ax.set_xticks(range(len(classes)), labels)
    ax.set_yticks(range(len(classes)), labels)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)


def plot_sfs(score_curve, std_curve, chosen_l: int, path) -> None:
    """Criterion accuracy against subset size, with a band of one std and the chosen size."""
    score = np.asarray(score_curve, dtype=float) * 100
    std = np.asarray(std_curve, dtype=float) * 100
    n = np.arange(1, len(score) + 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(n, score, lw=1.2)
    ax.fill_between(n, score - std, score + std, alpha=0.25)
    ax.axvline(chosen_l, color="tab:red", ls="--", lw=1, label=f"l = {chosen_l}")
    ax.set_xlabel("features")
    ax.set_ylabel("accuracy (%)")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
