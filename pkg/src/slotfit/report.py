"""Evaluation report output: delimited table and summary figures.

The CSV follows the benchmark column order (Obj, Slot, Prec., CD, EMD)
with one row per scene and a trailing mean row. Figures are rendered with
the Agg backend straight to PNG files next to the CSV.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .metrics import EvaluationReport

CSV_COLUMNS = [
    ("Obj", "obj_iou"),
    ("Slot", "slot_iou"),
    ("Prec.", "transform_precision"),
    ("CD", "chamfer"),
    ("EMD", "emd"),
]


def write_metrics_csv(report: EvaluationReport, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scene"] + [name for name, _ in CSV_COLUMNS] + ["fallback"])
        for s in report.scenes:
            writer.writerow(
                [s.scene]
                + [f"{getattr(s, field):.6g}" for _, field in CSV_COLUMNS]
                + [int(s.used_fallback)]
            )
        if report.scenes:
            writer.writerow(
                ["mean"]
                + [f"{report.aggregate[field]:.6g}" for _, field in CSV_COLUMNS]
                + [f"{report.aggregate['fallback_rate']:.6g}"]
            )
    return path


def render_report_figures(report: EvaluationReport, out_dir) -> list[Path]:
    """Render the metric summary figures; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if not report.scenes:
        return written

    labels = [s.scene for s in report.scenes]
    x = range(len(labels))
    colors = ["#cc4444" if s.used_fallback else "#4477aa" for s in report.scenes]

    fig, axes = plt.subplots(1, len(CSV_COLUMNS), figsize=(4 * len(CSV_COLUMNS), 3.4))
    for ax, (name, field) in zip(axes, CSV_COLUMNS):
        values = [getattr(s, field) for s in report.scenes]
        ax.bar(x, values, color=colors)
        ax.axhline(report.aggregate[field], color="k", linestyle="--", linewidth=1,
                   label=f"mean {report.aggregate[field]:.4g}")
        ax.set_title(name)
        ax.set_xticks(list(x))
        ax.set_xticklabels(labels, rotation=90, fontsize=6)
        ax.legend(fontsize=7)
    fig.suptitle(f"Per-scene metrics ({report.scene_count} scenes; red = fallback)")
    fig.tight_layout()
    summary_path = out_dir / "metrics_summary.png"
    fig.savefig(summary_path, dpi=120)
    plt.close(fig)
    written.append(summary_path)

    fig, ax = plt.subplots(figsize=(4.5, 4))
    cds = [s.chamfer for s in report.scenes]
    emds = [s.emd for s in report.scenes]
    ax.scatter(cds, emds, c=colors)
    ax.set_xlabel("Chamfer distance (m$^2$)")
    ax.set_ylabel("Earth Mover's distance (m)")
    ax.set_title("Distance metrics per scene")
    fig.tight_layout()
    scatter_path = out_dir / "distance_scatter.png"
    fig.savefig(scatter_path, dpi=120)
    plt.close(fig)
    written.append(scatter_path)
    return written
