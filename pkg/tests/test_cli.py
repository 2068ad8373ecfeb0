import json

from click.testing import CliRunner

from clustersort.cli import main
from clustersort.synthetic import SyntheticSpec, generate_synthetic, write_dataset


def make_dataset(tmp_path, **overrides):
    params = dict(
        class_count=4, total=700, zipf_exponent=1.0, dim=8,
        cluster_sigma=0.1, noise_fraction=0.05, rng_seed=5,
    )
    params.update(overrides)
    spec = SyntheticSpec(**params)
    dataset = generate_synthetic(spec)
    features = tmp_path / "features.mcft"
    labels = tmp_path / "labels.csv"
    write_dataset(dataset, features, labels)
    return spec, features, labels


def test_ingest_and_iterate(tmp_path):
    _, features, labels = make_dataset(tmp_path)
    runner = CliRunner()
    proj = tmp_path / "proj"
    result = runner.invoke(
        main,
        ["ingest", "--features", str(features), "--labels", str(labels),
         "--schedule", "64,16", "--out", str(proj)],
    )
    assert result.exit_code == 0, result.output
    assert "700 objects" in result.output

    result = runner.invoke(main, ["iterate", "--project", str(proj)])
    assert result.exit_code == 0, result.output
    assert "iteration 1 (m=64)" in result.output


def test_simulate_from_spec(tmp_path):
    spec_file = tmp_path / "spec.json"
    spec_file.write_text(
        json.dumps(
            {
                "class_count": 4,
                "total": 800,
                "zipf_exponent": 1.0,
                "dim": 8,
                "cluster_sigma": 0.1,
                "noise_fraction": 0.02,
                "rng_seed": 9,
            }
        )
    )
    out = tmp_path / "run"
    runner = CliRunner()
    result = runner.invoke(
        main,
        ["simulate", "--spec", str(spec_file), "--schedule", "64,16,8", "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    report = json.loads((out / "report.json").read_text())
    assert report["assigned_fraction"] > 0.5
    assert (out / "labeling.csv").exists()
    assert (out / "iterations.csv").exists()
    assert (out / "iterations.png").exists()
    assert (out / "precision.csv").exists()
    assert (out / "class_sizes.png").exists()
    assert (out / "correspondence.png").exists()


def test_simulate_with_policy(tmp_path):
    _, features, labels = make_dataset(tmp_path)
    policy = tmp_path / "policy.json"
    policy.write_text(json.dumps({"cluster_purity_threshold": 0.8}))
    out = tmp_path / "run"
    runner = CliRunner()
    result = runner.invoke(
        main,
        ["simulate", "--features", str(features), "--labels", str(labels),
         "--policy", str(policy), "--schedule", "64,16", "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    assert json.loads((out / "report.json").read_text())["judgments"]["total"] > 0


def test_export_empty_project(tmp_path):
    _, features, labels = make_dataset(tmp_path)
    proj = tmp_path / "proj"
    runner = CliRunner()
    runner.invoke(
        main,
        ["ingest", "--features", str(features), "--out", str(proj)],
    )
    result = runner.invoke(main, ["export", "--project", str(proj)])
    assert result.exit_code == 0, result.output
    lines = result.output.splitlines()
    assert lines[0] == "object_id,label_path"
    assert len(lines) == 701


def test_metrics_against_truth(tmp_path):
    spec_file = tmp_path / "spec.json"
    spec_file.write_text(
        json.dumps({"class_count": 3, "total": 500, "dim": 8, "rng_seed": 2,
                    "zipf_exponent": 1.0, "cluster_sigma": 0.1})
    )
    out = tmp_path / "run"
    runner = CliRunner()
    result = runner.invoke(
        main, ["simulate", "--spec", str(spec_file), "--schedule", "32,8", "--out", str(out)]
    )
    assert result.exit_code == 0, result.output

    metrics_out = tmp_path / "metrics"
    result = runner.invoke(
        main,
        ["metrics", "--project", str(out / "project"), "--against", str(out / "labels.csv"),
         "--out", str(metrics_out)],
    )
    assert result.exit_code == 0, result.output
    report = json.loads((metrics_out / "report.json").read_text())
    assert "agreement" in report
    assert report["agreement"]["macro_precision"] > 0.9
    assert (metrics_out / "iterations.csv").exists()


def test_simulate_reproduces_agreement_via_metrics(tmp_path):
    # `metrics --against truth` recomputes the same predominant agreement
    spec_file = tmp_path / "spec.json"
    spec_file.write_text(
        json.dumps({"class_count": 4, "total": 600, "dim": 8, "rng_seed": 4,
                    "zipf_exponent": 1.0, "cluster_sigma": 0.1})
    )
    out = tmp_path / "run"
    runner = CliRunner()
    result = runner.invoke(
        main, ["simulate", "--spec", str(spec_file), "--schedule", "32,8", "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    sim_report = json.loads((out / "report.json").read_text())

    metrics_out = tmp_path / "m"
    result = runner.invoke(
        main,
        ["metrics", "--project", str(out / "project"), "--against", str(out / "labels.csv"),
         "--out", str(metrics_out)],
    )
    assert result.exit_code == 0, result.output
    metrics_report = json.loads((metrics_out / "report.json").read_text())
    assert metrics_report["agreement"]["macro_precision"] == sim_report["agreement"]["macro_precision"]
