"""Command-line driver.

Subcommands: ingest, iterate, simulate, tree, export, metrics, serve.
`simulate` runs the complete oracle-driven workflow (optionally generating a
synthetic dataset first) and renders the report with figures; `metrics`
renders the same report for an existing project.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .errors import ClusterSortError
from .lifecycle import ClusterStatus
from .oracle import OraclePolicy, oracle_annotate
from .project import DEFAULT_SCHEDULE, Project
from .report import render_report
from .store import load_labels
from .synthetic import SyntheticSpec, generate_synthetic, write_dataset


def _parse_schedule(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise click.BadParameter(f"schedule must be comma-separated integers: {text!r}")


@click.group()
def main() -> None:
    """Density-seeded clustering and mass annotation engine."""


@main.command()
@click.option("--features", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--labels", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--schedule", default=",".join(str(m) for m in DEFAULT_SCHEDULE), show_default=True)
@click.option("--k", default=1, show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False), help="project directory")
def ingest(features, labels, schedule, k, out):
    """Create a project around a feature file (validates the format)."""
    try:
        project = Project.create(
            out, features, schedule=_parse_schedule(schedule), k=k, labels_path=labels
        )
    except (ClusterSortError, ValueError) as exc:
        raise click.ClickException(str(exc))
    click.echo(
        f"project {project.project_id}: {project.store.count} objects, "
        f"dim {project.store.dimensionality}, schedule {list(project.schedule)}"
    )


@main.command()
@click.option("--project", "project_dir", required=True, type=click.Path(exists=True, file_okay=False))
def iterate(project_dir):
    """Run the next clustering iteration on a project."""
    project = Project.open(project_dir)
    try:
        started = project.start_iteration(actor="cli")
    except ClusterSortError as exc:
        raise click.ClickException(str(exc))
    if started is None:
        click.echo("schedule exhausted; nothing to do")
        return
    click.echo(
        f"iteration {started.iteration} (m={started.m}): "
        f"{len(started.cluster_ids)} proposed clusters, {started.noise_count} noise"
    )


@main.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="synthetic dataset spec (JSON); omit to use --features/--labels")
@click.option("--features", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--labels", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--schedule", default=",".join(str(m) for m in DEFAULT_SCHEDULE), show_default=True)
@click.option("--k", default=1, show_default=True)
@click.option("--seed", default=0, show_default=True, help="dataset seed override for --spec")
@click.option("--policy", "policy_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", required=True, type=click.Path(file_okay=False))
def simulate(spec_path, features, labels, schedule, k, seed, policy_path, out):
    """Run the whole workflow with the oracle annotator and write the report."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)

    class_sizes = None
    if spec_path:
        spec = SyntheticSpec.from_json(spec_path)
        if seed:
            spec = SyntheticSpec(**{**spec.__dict__, "rng_seed": seed})
        dataset = generate_synthetic(spec)
        features = out_dir / "features.mcft"
        labels = out_dir / "labels.csv"
        write_dataset(dataset, features, labels)
        truth = dataset.truth
        class_sizes = dataset.class_sizes
    elif features and labels:
        truth = {oid: label for oid, (_, label) in load_labels(labels).items()}
    else:
        raise click.ClickException("provide --spec or both --features and --labels")

    policy = OraclePolicy.from_json(policy_path) if policy_path else OraclePolicy()
    counter = iter(range(1, 1 << 62))
    project = Project.create(
        out_dir / "project",
        features,
        schedule=_parse_schedule(schedule),
        k=k,
        labels_path=labels,
        clock=lambda: float(next(counter)),
    )
    run = oracle_annotate(project, truth, policy)
    project.check_invariants()

    (out_dir / "labeling.csv").write_text(project.labeling_csv(), encoding="utf-8")
    report = render_report(
        project,
        out_dir,
        truth=truth,
        class_sizes=class_sizes,
        discovery=run.discovery_iteration,
        simulated=True,
        extra={
            "judgments": {
                "cluster_verdicts": run.cluster_verdicts,
                "page_verdicts": run.page_verdicts,
                "naming_acts": run.naming_acts,
                "total": run.total_judgments,
            },
        },
    )
    agreement = report.get("agreement", {})
    click.echo(
        f"simulated {run.iterations} iterations: "
        f"{report['assigned_fraction']:.1%} assigned, "
        f"macro precision {agreement.get('macro_precision', float('nan')):.4f}, "
        f"{run.total_judgments} judgments"
    )
    click.echo(f"report written to {out_dir / 'report.json'}")


@main.command()
@click.option("--project", "project_dir", required=True, type=click.Path(exists=True, file_okay=False))
def tree(project_dir):
    """Build the average-linkage hierarchy over grown clusters."""
    project = Project.open(project_dir)
    try:
        built = project.build_tree(actor="cli")
    except ClusterSortError as exc:
        raise click.ClickException(str(exc))
    from .hierarchy import tree_stats

    nodes, depth, named = tree_stats(built)
    click.echo(f"tree built: {nodes} nodes, depth {depth}, {named} named")


@main.command()
@click.option("--project", "project_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV path (stdout when omitted)")
def export(project_dir, out):
    """Export the labeling CSV (object_id,label_path)."""
    project = Project.open(project_dir)
    if project.tree is None and any(
        c.status is ClusterStatus.GROWN for c in project.clusters.values()
    ):
        raise click.ClickException("tree not built yet; run the tree command first")
    if project.tree is None:
        csv_text = "object_id,label_path\n" + "".join(
            f"{oid},\n" for oid in sorted(project.unassigned)
        )
    else:
        csv_text = project.labeling_csv()
    if out:
        Path(out).write_text(csv_text, encoding="utf-8")
        click.echo(f"wrote {out}")
    else:
        click.echo(csv_text, nl=False)


@main.command()
@click.option("--project", "project_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--against", type=click.Path(exists=True, dir_okay=False), default=None,
              help="truth labels sidecar for agreement metrics")
@click.option("--out", required=True, type=click.Path(file_okay=False))
def metrics(project_dir, against, out):
    """Compute the metrics report (JSON + CSV tables + figures)."""
    project = Project.open(project_dir)
    truth = None
    if against:
        truth = {oid: label for oid, (_, label) in load_labels(against).items()}
    report = render_report(project, out, truth=truth)
    click.echo(json.dumps(report, indent=2, sort_keys=True))


@main.command()
@click.option("--root", default="projects", type=click.Path(file_okay=False), show_default=True)
@click.option("--addr", default="127.0.0.1:8000", show_default=True)
def serve(root, addr):
    """Start the HTTP API."""
    import uvicorn

    from .api import create_app

    host, _, port = addr.partition(":")
    app = create_app(root)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000))


if __name__ == "__main__":
    main()
