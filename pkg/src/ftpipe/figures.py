"""Figure rendering for campaign and evaluation reports.

Charts are written straight to files with the Agg backend so the CLI works
headless; every function returns the path it wrote.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .faultlab import CampaignResult


def avf_chart(result: CampaignResult, path: str | Path, title: str = "register vulnerability") -> Path:
    """Per-latch vulnerability as a bar chart, one bar per latch."""
    path = Path(path)
    names = [s.name or f"latch_{s.index}" for s in result.latches]
    values = [s.avf for s in result.latches]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.5 * len(names) + 2), 3.2))
    ax.bar(range(len(values)), values, color="#4878a8")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=45, ha="right", fontsize=8)
    ax.set_ylim(0, 1)
    ax.set_ylabel("AVF")
    ax.set_title(f"{title} ({result.mode})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def training_chart(history: list[dict], path: str | Path) -> Path:
    """Loss and validation accuracy over epochs on twin axes."""
    path = Path(path)
    epochs = [row["epoch"] for row in history]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(epochs, [row["loss"] for row in history], color="#a85048", label="loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    # val accuracy is None when the split left no validation latches
    val = [(r["epoch"], r["val_accuracy"]) for r in history if r["val_accuracy"] is not None]
    twin = ax.twinx()
    if val:
        twin.plot(*zip(*val), color="#48a878", label="val accuracy")
    twin.set_ylabel("val accuracy")
    twin.set_ylim(0, 1.05)
    ax.set_title("training")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def tradeoff_chart(rows: list[dict], path: str | Path) -> Path:
    """Area overhead against residual error rate, one point per design.

    Rows carry name, area_nodes, overhead_pct, error_pct (the text report's
    columns)."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for row in rows:
        ax.scatter(row["overhead_pct"], row["error_pct"], s=30, color="#4878a8")
        ax.annotate(
            row["name"],
            (row["overhead_pct"], row["error_pct"]),
            textcoords="offset points",
            xytext=(4, 4),
            fontsize=8,
        )
    ax.set_xlabel("area overhead (%)")
    ax.set_ylabel("error rate (%)")
    ax.set_title("hardening trade-off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_eval_figures(rows: list[dict], directory: str | Path) -> list[Path]:
    """The eval report's figure set, written next to the delimited output."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    return [tradeoff_chart(rows, directory / "tradeoff.png")]
