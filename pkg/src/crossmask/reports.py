"""Report emission. Every numeric output lands in delimited text first; images
are rendered from those tables, so the pipeline is testable without plotting.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .postprocess import FeatureReport, LatentProjection, OverlapReport
from .sweep import SweepResult

__all__ = [
    "write_feature_report",
    "write_overlap_reports",
    "write_loss_curves",
    "write_frequency_table",
    "write_pca_table",
    "selection_metrics",
    "render_loss_curves",
    "render_frequency",
    "render_pca",
]


def write_feature_report(report: FeatureReport, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "feature_report.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "feature", "frequency", "mean_abs_weight", "selected"])
        for rank, (feature, freq, mean_w) in enumerate(report.ranked_features, start=1):
            writer.writerow([rank, feature, repr(freq), repr(mean_w),
                             int(feature in report.selected)])
    summary = {
        "weight_threshold": report.weight_threshold,
        "frequency_threshold": report.frequency_threshold,
        "n_selected": len(report.selected),
        "selected": sorted(report.selected),
    }
    (out_dir / "feature_report_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return path


def write_overlap_reports(overlaps: dict[str, OverlapReport], out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "overlap_groups.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["perspective", "group", "feature"])
        for name in sorted(overlaps):
            report = overlaps[name]
            for group in sorted(report.groups):
                for feature in sorted(report.groups[group]):
                    writer.writerow([name, group, feature])
    summary = {
        name: {group: sorted(members) for group, members in report.groups.items()}
        for name, report in overlaps.items()
    }
    (out_dir / "overlap_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return path


def write_loss_curves(sweep: SweepResult, out_dir) -> Path:
    """Long-format table of the weighted loss components per run and epoch."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    w = sweep.config.train.loss_weights
    path = out_dir / "loss_curves.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run", "epoch", "reconstruction", "classification", "sparsity", "total"])
        for (i, j), record in sorted(sweep.run_records.items()):
            for epoch, row in enumerate(record.loss_history):
                writer.writerow([
                    f"{i}_{j}", epoch,
                    repr(w.reconstruction * (row.rec_a + row.rec_b)),
                    repr(w.classification * (row.class_a + row.class_b)),
                    repr(w.sparsity * row.sparse),
                    repr(row.total),
                ])
    return path


def write_frequency_table(report: FeatureReport, out_dir) -> Path:
    """Plot-ready frequency-versus-rank curve."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "frequency_curve.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "frequency"])
        for rank, (_, freq, _) in enumerate(report.ranked_features, start=1):
            writer.writerow([rank, repr(freq)])
    return path


def write_pca_table(projection: LatentProjection, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "latent_pca.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["domain", "label", "pc1", "pc2"])
        for domain, label, (pc1, pc2) in zip(projection.domains, projection.labels,
                                             projection.coords):
            writer.writerow([domain, label, repr(float(pc1)), repr(float(pc2))])
    meta = {
        "explained_variance": list(projection.explained_variance),
        "degenerate": projection.degenerate,
    }
    (out_dir / "latent_pca_meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    return path


def selection_metrics(selected, truth_features) -> dict:
    """Recall/precision of a selected feature set against planted ground truth."""
    selected = set(selected)
    truth = set(truth_features)
    hit = selected & truth
    return {
        "n_selected": len(selected),
        "n_truth": len(truth),
        "n_hit": len(hit),
        "recall": len(hit) / len(truth) if truth else float("nan"),
        "precision": len(hit) / len(selected) if selected else 0.0,
    }


def render_loss_curves(out_dir) -> Path:
    """Four panels (reconstruction, classification, sparsity, total), one line per run."""
    out_dir = Path(out_dir)
    per_run: dict[str, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    with (out_dir / "loss_curves.csv").open(newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            for panel in ("reconstruction", "classification", "sparsity", "total"):
                per_run[row["run"]][panel].append(float(row[panel]))
    fig, axes = plt.subplots(2, 2, figsize=(10, 7))
    panels = ("reconstruction", "classification", "sparsity", "total")
    for ax, panel in zip(axes.ravel(), panels):
        for run, curves in per_run.items():
            ax.plot(curves[panel], linewidth=0.6, alpha=0.7)
        ax.set_title(f"weighted {panel}")
        ax.set_xlabel("epoch")
    fig.tight_layout()
    path = out_dir / "loss_curves.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_frequency(out_dir) -> Path:
    ranks, freqs = [], []
    with (out_dir / "frequency_curve.csv").open(newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            ranks.append(int(row["rank"]))
            freqs.append(float(row["frequency"]))
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(ranks, freqs, marker=".", linewidth=0.8)
    ax.set_xlabel("feature rank")
    ax.set_ylabel("selection frequency")
    fig.tight_layout()
    path = out_dir / "frequency_curve.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_pca(out_dir) -> Path:
    points: dict[tuple[str, str], list[tuple[float, float]]] = defaultdict(list)
    with (out_dir / "latent_pca.csv").open(newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            points[(row["domain"], row["label"])].append((float(row["pc1"]), float(row["pc2"])))
    fig, ax = plt.subplots(figsize=(6, 6))
    markers = ["o", "s", "^", "v"]
    for k, ((domain, label), pts) in enumerate(sorted(points.items())):
        xs, ys = zip(*pts)
        ax.scatter(xs, ys, s=14, marker=markers[k % len(markers)], label=f"{domain}/{label}")
    ax.set_xlabel("PC1")
    ax.set_ylabel("PC2")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = out_dir / "latent_pca.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
