"""Figure rendering for run artifacts.

Every report path writes a PNG next to its delimited output: training emits
the loss curve beside loss_curve.csv, evaluation a per-sequence score chart
beside scores.txt/scores.json, ablation a grouped bar chart beside
ablation.csv. Headless backend; no GUI anywhere.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import DatasetReport


def plot_loss_curves(curves: dict[str, list[float]], path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    offset = 0
    for name, curve in curves.items():
        xs = np.arange(offset, offset + len(curve))
        ax.plot(xs, curve, label=name, linewidth=1.0)
        offset += len(curve)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(frameon=False)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_scores(report: DatasetReport, path) -> None:
    names = [s.sequence_id for s in report.scores]
    jf = [100 * s.jf for s in report.scores]
    j = [100 * s.j for s in report.scores]
    f_ = [100 * s.f for s in report.scores]
    x = np.arange(len(names))
    width = 0.27
    fig, ax = plt.subplots(figsize=(max(6, 0.7 * len(names) + 2), 3.5))
    ax.bar(x - width, jf, width, label="J&F")
    ax.bar(x, j, width, label="J")
    ax.bar(x + width, f_, width, label="F")
    ax.axhline(100 * report.jf, color="k", linestyle="--", linewidth=0.8,
               label=f"mean J&F = {100 * report.jf:.1f}%")
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=45, ha="right", fontsize=7)
    ax.set_ylabel("score (%)")
    ax.set_ylim(0, 100)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_ablation(rows: list[dict], path) -> None:
    """One bar group per ablation row (fusion x tta grid)."""
    labels = [r["name"] for r in rows]
    x = np.arange(len(rows))
    width = 0.27
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(x - width, [100 * r["j_and_f"] for r in rows], width, label="J&F")
    ax.bar(x, [100 * r["j"] for r in rows], width, label="J")
    ax.bar(x + width, [100 * r["f"] for r in rows], width, label="F")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("score (%)")
    ax.set_ylim(0, 100)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
