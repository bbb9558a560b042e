"""Figure rendering for search runs, audits, and benchmark scoring.

Everything draws straight to files through the Agg backend; no figure ever
needs a display. Paths are returned so callers can list what was written.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_search_history(history: list[dict], path: str) -> str:
    """Best and mean fitness per iteration of an evolutionary run."""
    its = [h["iteration"] for h in history]
    best = [h["best_fitness"] for h in history]
    mean = [h["mean_fitness"] for h in history]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(its, best, marker="o", ms=3, label="best")
    ax.plot(its, mean, marker=".", ms=3, alpha=0.7, label="population mean")
    ax.set_xlabel("iteration")
    ax.set_ylabel("fitness")
    ax.set_title("search progress")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_channel_audit(audit: dict, path: str) -> str:
    """Per-channel training counts, one panel per layer."""
    layers = audit["layers"]
    fig, axes = plt.subplots(len(layers), 1,
                             figsize=(7, 1.8 * len(layers)), squeeze=False)
    for ax, layer in zip(axes[:, 0], layers):
        counts = layer["counts"]
        ax.bar(np.arange(1, len(counts) + 1), counts, width=0.8)
        ax.set_ylabel(f"layer {layer['layer']}")
        ax.set_xlim(0.5, len(counts) + 0.5)
    axes[-1, 0].set_xlabel("channel")
    fig.suptitle(f"per-channel coverage ({audit['principle']})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_benchmark(acc_means: np.ndarray, flops: np.ndarray, path: str) -> str:
    """Accuracy histogram plus the accuracy-vs-FLOPs cloud of a table."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    ax1.hist(acc_means, bins=24, color="tab:blue", alpha=0.85)
    ax1.set_xlabel("retrained accuracy")
    ax1.set_ylabel("widths")
    ax2.scatter(flops, acc_means, s=10, alpha=0.6)
    ax2.set_xlabel("FLOPs")
    ax2.set_ylabel("retrained accuracy")
    for ax in (ax1, ax2):
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_prediction_scatter(predicted: list[float], truth: list[float],
                            corr: dict, path: str) -> str:
    """Supernet score against retrained accuracy for every table width."""
    fig, ax = plt.subplots(figsize=(5, 4.5))
    ax.scatter(truth, predicted, s=12, alpha=0.7)
    ax.set_xlabel("retrained accuracy")
    ax.set_ylabel("supernet score")
    ax.set_title(
        "ranking fidelity "
        f"(tau={corr['kendall_tau']:.3f}, rho={corr['spearman']:.3f})"
    )
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_loss_curve(losslog: list[dict], path: str, window: int = 50) -> str:
    """Raw sampled-width losses with a running mean overlay."""
    losses = np.array([e["loss"] for e in losslog])
    steps = np.array([e["step"] for e in losslog])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(steps, losses, lw=0.4, alpha=0.4, label="per-width loss")
    if len(losses) >= window:
        kernel = np.ones(window) / window
        smooth = np.convolve(losses, kernel, mode="valid")
        ax.plot(steps[window - 1:], smooth, lw=1.5, label=f"mean of {window}")
    ax.set_xlabel("step")
    ax.set_ylabel("training loss")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
