"""Report rendering: JSON summary, CSV tables, and matplotlib figures.

The iteration table mirrors the per-iteration accounting (minimum cluster
size, proposed and validated cluster counts, objects assigned, sorting
rate), the precision table the macro/quantile summary layout.  Figures are
written as PNG files next to the delimited output.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import UndefinedError
from .events import AnnotationEvent
from .metrics import (
    correspondence_matrix,
    macro_precision,
    precision_quantile,
    predominant_label_agreement,
    segment_sessions,
    throughput,
)
from .project import Project


@dataclass
class IterationRow:
    iteration: int
    m: int
    new_clusters: int = 0
    validated_clusters: int = 0
    objects_assigned: int = 0
    decisions: int = 0
    hours: float = 0.0

    @property
    def objects_per_decision(self) -> float | None:
        return self.objects_assigned / self.decisions if self.decisions else None

    @property
    def objects_per_hour(self) -> float | None:
        return self.objects_assigned / self.hours if self.hours > 0 else None


def iteration_table(events: Sequence[AnnotationEvent]) -> list[IterationRow]:
    """Fold the event log into one row per iteration."""
    rows: list[IterationRow] = []
    cluster_iteration: dict[str, int] = {}
    current: IterationRow | None = None
    bucket: list[AnnotationEvent] = []

    def close() -> None:
        if current is None:
            return
        current.hours = sum(s.duration for s in segment_sessions(bucket)) / 3600.0
        rows.append(current)

    for ev in events:
        if ev.action == "iteration_started":
            close()
            current = IterationRow(
                iteration=int(ev.payload["iteration"]),
                m=int(ev.payload["m"]),
                new_clusters=len(ev.payload.get("seeds", [])),
            )
            bucket = [ev]
            for seed in ev.payload.get("seeds", []):
                cluster_iteration[seed["cluster_id"]] = current.iteration
            continue
        if current is None:
            continue
        bucket.append(ev)
        if ev.action in ("cluster_approved", "cluster_flagged"):
            current.validated_clusters += 1
            current.objects_assigned += ev.objects_affected
            current.decisions += 1
        elif ev.action == "cluster_rejected":
            current.decisions += 1
        elif ev.action == "page_verdict":
            current.decisions += 1
        elif ev.action == "candidate_removed":
            current.decisions += 1
        elif ev.action == "grow_committed":
            current.objects_assigned += ev.objects_affected
    close()
    return rows


def write_iterations_csv(rows: Sequence[IterationRow], path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(
            [
                "iteration",
                "m",
                "new_clusters",
                "validated_clusters",
                "objects_assigned",
                "objects_per_decision",
                "objects_per_hour",
            ]
        )
        for row in rows:
            writer.writerow(
                [
                    row.iteration,
                    row.m,
                    row.new_clusters,
                    row.validated_clusters,
                    row.objects_assigned,
                    f"{row.objects_per_decision:.2f}" if row.objects_per_decision else "",
                    f"{row.objects_per_hour:.1f}" if row.objects_per_hour else "",
                ]
            )
        writer.writerow(
            [
                "total",
                "",
                sum(r.new_clusters for r in rows),
                sum(r.validated_clusters for r in rows),
                sum(r.objects_assigned for r in rows),
                "",
                "",
            ]
        )


def precision_summary(per_class: Mapping[str, float]) -> dict:
    return {
        "macro_precision": macro_precision(per_class),
        "precision_q10": precision_quantile(per_class, 0.10),
        "class_count": len(per_class),
    }


def write_precision_csv(groups: Mapping[str, Mapping[str, float]], path: Path) -> None:
    """One row per class group: macro precision, 10% quantile, class count."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["group", "macro_precision", "precision_q10", "class_count"])
        for group, per_class in groups.items():
            if not per_class:
                continue
            summary = precision_summary(per_class)
            writer.writerow(
                [
                    group,
                    f"{summary['macro_precision']:.6f}",
                    f"{summary['precision_q10']:.6f}",
                    summary["class_count"],
                ]
            )


# -- figures ------------------------------------------------------------------


def plot_iterations(rows: Sequence[IterationRow], path: Path) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    idx = np.arange(len(rows))
    ax1.bar(idx - 0.2, [r.new_clusters for r in rows], width=0.4, label="proposed")
    ax1.bar(idx + 0.2, [r.validated_clusters for r in rows], width=0.4, label="validated")
    ax1.set_xticks(idx)
    ax1.set_xticklabels([f"{r.iteration}\nm={r.m}" for r in rows])
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("clusters")
    ax1.legend()
    ax2.plot(idx, np.cumsum([r.objects_assigned for r in rows]), marker="o")
    ax2.set_xticks(idx)
    ax2.set_xticklabels([str(r.iteration) for r in rows])
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("objects assigned (cumulative)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_class_sizes(
    class_sizes: Mapping[str, int], per_class: Mapping[str, float], path: Path
) -> None:
    classes = sorted(class_sizes, key=lambda c: -class_sizes[c])
    sizes = [class_sizes[c] for c in classes]
    colors = [per_class.get(c, np.nan) for c in classes]
    fig, ax = plt.subplots(figsize=(8, 4))
    sc = ax.scatter(range(len(classes)), sizes, c=colors, cmap="viridis", vmin=0, vmax=1)
    ax.set_yscale("log")
    ax.set_xlabel("class rank")
    ax.set_ylabel("class size")
    fig.colorbar(sc, label="precision")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_correspondence(
    labeling_a: Mapping[str, str], labeling_b: Mapping[str, str], path: Path
) -> None:
    mat = correspondence_matrix(labeling_a, labeling_b)
    grid = np.zeros((len(mat.order_a), len(mat.order_b)))
    for i, ca in enumerate(mat.order_a):
        for j, cb in enumerate(mat.order_b):
            grid[i, j] = mat.value(ca, cb)
    fig, ax = plt.subplots(figsize=(7, 6))
    im = ax.imshow(grid, cmap="Reds", aspect="auto", vmin=0, vmax=1)
    ax.set_xlabel("second labeling (classes)")
    ax.set_ylabel("first labeling (classes)")
    fig.colorbar(im, label="relative overlap")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_discovery(
    class_sizes: Mapping[str, int], discovery: Mapping[str, int], path: Path
) -> None:
    classes = [c for c in sorted(class_sizes) if c in discovery]
    if not classes:
        return
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter(
        [class_sizes[c] for c in classes], [discovery[c] for c in classes]
    )
    ax.set_xscale("log")
    ax.set_xlabel("class size")
    ax.set_ylabel("discovery iteration")
    ax.invert_yaxis()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# -- top level ------------------------------------------------------------------


def render_report(
    project: Project,
    out_dir: str | Path,
    truth: Mapping[str, str] | None = None,
    class_sizes: Mapping[str, int] | None = None,
    discovery: Mapping[str, int] | None = None,
    extra: Mapping | None = None,
    simulated: bool = False,
) -> dict:
    """Write report.json, the CSV tables, and the figures into out_dir.

    Simulated runs use a logical clock, so their reports carry only the
    objects-per-decision analog; wall-clock rates come from real logs only.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    events = list(project.log)
    rows = iteration_table(events)
    if simulated:
        for row in rows:
            row.hours = 0.0

    report: dict = {
        "project_id": project.project_id,
        "objects": project.store.count,
        "unassigned": len(project.unassigned),
        "assigned_fraction": 1.0 - len(project.unassigned) / max(project.store.count, 1),
        "iterations": [
            {
                "iteration": r.iteration,
                "m": r.m,
                "new_clusters": r.new_clusters,
                "validated_clusters": r.validated_clusters,
                "objects_assigned": r.objects_assigned,
                "objects_per_decision": r.objects_per_decision,
                "objects_per_hour": r.objects_per_hour,
            }
            for r in rows
        ],
    }
    if simulated:
        report["objects_per_hour"] = None
    else:
        try:
            rates = throughput(events)
            report["objects_per_hour"] = rates.objects_per_hour
            report["naming_objects_per_hour"] = rates.naming_objects_per_hour
        except UndefinedError:
            report["objects_per_hour"] = None

    write_iterations_csv(rows, out_dir / "iterations.csv")
    if rows:
        plot_iterations(rows, out_dir / "iterations.png")

    if truth is not None and project.tree is not None:
        labeling = project.labeling()
        agreement = predominant_label_agreement(
            labeling.assignments, {o: l for o, l in truth.items() if l}
        )
        report["agreement"] = {
            "macro_precision": agreement.macro,
            "precision_q10": precision_quantile(agreement.per_class, 0.10),
            "class_count": len(agreement.per_class),
            "excluded_classes": agreement.excluded,
        }
        write_precision_csv({"total": agreement.per_class}, out_dir / "precision.csv")
        mc_sizes: dict[str, int] = {}
        for cls in labeling.assignments.values():
            mc_sizes[cls] = mc_sizes.get(cls, 0) + 1
        plot_class_sizes(mc_sizes, agreement.per_class, out_dir / "class_sizes.png")
        plot_correspondence(
            {o: l for o, l in truth.items() if l},
            labeling.assignments,
            out_dir / "correspondence.png",
        )

    if class_sizes and discovery:
        plot_discovery(class_sizes, discovery, out_dir / "discovery.png")
        report["discovery_iteration"] = dict(sorted(discovery.items()))

    if extra:
        report.update(extra)

    (out_dir / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return report
