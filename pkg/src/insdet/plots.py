"""File-based report rendering: delimited metric tables and PR-curve figures."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def write_report_csv(path: str | Path, flat_metrics: dict[str, float]) -> None:
    """Flat metric table, one (metric, value) row per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        for key, value in flat_metrics.items():
            writer.writerow([key, f"{value:.6f}"])


def write_pr_series_csv(path: str | Path, curves: dict) -> None:
    """PR series: per-instance raw staircases plus the class-mean curve."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["series", "instance_id", "recall", "precision"])
        for inst, series in sorted(curves.get("instances", {}).items()):
            for r, p in zip(series["recall"], series["precision"]):
                writer.writerow(["raw", inst, f"{r:.6f}", f"{p:.6f}"])
        mean = curves.get("mean", {})
        for r, p in zip(mean.get("recall", []), mean.get("precision", [])):
            writer.writerow(["interpolated", "mean", f"{r:.6f}", f"{p:.6f}"])


def render_pr_figure(path: str | Path, curves: dict, label: str = "") -> None:
    """Class-mean interpolated PR curve rendered to a vector-graphic file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mean = curves.get("mean", {})
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(mean.get("recall", []), mean.get("precision", []), lw=1.8, label=label or "mean")
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.05)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def render_bench_figure(path: str | Path, rows: list[dict]) -> None:
    """Seconds-per-image bar chart for the benchmarked stages."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    labels = [r["stage"] for r in rows]
    times = [r["seconds_per_image"] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(labels, times, color="#4878b0")
    ax.set_ylabel("seconds / image")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
