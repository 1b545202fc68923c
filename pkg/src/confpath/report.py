"""Figure rendering for the CLI report paths (written to files, never shown)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_conformal_figure(doc, trace, out_path):
    """Candidate-label view: per-grid predictions, gaps, and the emitted set."""
    zs = np.array([r[0] for r in trace])
    gaps = np.array([r[1] for r in trace])
    preds = np.array([r[2] for r in trace])
    fig, (ax, ax2) = plt.subplots(
        2, 1, figsize=(7, 5), sharex=True, height_ratios=[3, 1]
    )
    for lo, hi in doc["intervals"]:
        ax.axvspan(lo, hi, color="tab:blue", alpha=0.25, lw=0)
    ax.plot(zs, preds, "k.-", ms=3, lw=0.8, label="prediction at grid label")
    ax.set_ylabel("prediction")
    ax.legend(loc="best", fontsize=8)
    ax.set_title(
        f"conformal set ({len(doc['intervals'])} intervals, "
        f"total length {doc['total_length']:.4g})"
    )
    ax2.semilogy(zs, np.maximum(gaps, 1e-300), ".-", ms=3, lw=0.8)
    ax2.axhline(doc["epsilon"], color="tab:red", lw=0.8, ls="--")
    ax2.set_xlabel("candidate label z")
    ax2.set_ylabel("gap")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_benchmark_figure(results, out_path):
    """Length-vs-accuracy sweep plus coverage per method."""
    fig, (ax, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    sweep = [r for r in results if r.epsilon is not None and r.mean_length is not None]
    if sweep:
        eps = [r.epsilon for r in sweep]
        lens = [r.mean_length for r in sweep]
        ax.semilogx(eps, lens, "o-", label="label sweep")
        ax.invert_xaxis()
    for r in results:
        if r.epsilon is None and r.mean_length is not None:
            ax.axhline(r.mean_length, ls="--", lw=1, label=r.method)
    ax.set_xlabel("gap tolerance")
    ax.set_ylabel("mean set length")
    ax.legend(fontsize=8)
    labels = [r.method if r.epsilon is None else f"{r.method}\n{r.epsilon:g}" for r in results]
    ax2.bar(range(len(results)), [r.coverage for r in results], color="tab:blue")
    ax2.axhline(1 - results[0].alpha, color="tab:red", ls="--", lw=1)
    ax2.set_xticks(range(len(results)), labels, fontsize=7)
    ax2.set_ylim(0, 1.05)
    ax2.set_ylabel("empirical coverage")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
