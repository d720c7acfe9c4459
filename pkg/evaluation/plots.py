"""
Training & Evaluation Plots
SVG loss curves from the JSONL step log and per-class Dice bars from a MetricReport
"""

import os
from typing import Dict, List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# Fixed SVG hash salt keeps repeated renders byte-identical
plt.rcParams["svg.hashsalt"] = "groundkit"
plt.rcParams["svg.fonttype"] = "none"

LOSS_KEYS = ("L", "L_text", "L_bce", "L_dice")


def plot_loss_curves(records: Sequence[dict], path: str) -> str:
    """One line per loss component against the step number"""
    fig, ax = plt.subplots(figsize=(6, 4))
    for key in LOSS_KEYS:
        points = [(r["step"], r[key]) for r in records if r.get(key) is not None]
        if points:
            steps, values = zip(*points)
            ax.plot(steps, values, label=key, linewidth=1.2)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(frameon=False)
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    return _save(fig, path)


def plot_class_dice(per_class_dice: Dict[str, float], path: str) -> str:
    """Horizontal bars of mean Dice (%) per class"""
    labels: List[str] = sorted(per_class_dice)
    values = [per_class_dice[label] * 100 for label in labels]
    fig, ax = plt.subplots(figsize=(6, max(2.0, 0.5 * len(labels) + 1)))
    ax.barh(labels, values, color="#1a4a7a")
    for y, value in enumerate(values):
        ax.text(value + 1, y, f"{value:.1f}", va="center", fontsize=8)
    ax.set_xlim(0, 110)
    ax.set_xlabel("Dice (%)")
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    return _save(fig, path)


def _save(fig, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
