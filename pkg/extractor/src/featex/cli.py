"""Command-line interface: train a feature extractor, export feature files."""

from __future__ import annotations

import json
from pathlib import Path

import click

from .config import FeatureTrainingConfig
from .data import scan_image_folder
from .extract import export
from .model import load_checkpoint, save_checkpoint
from .toyshapes import generate_toy_dataset
from .train import train


@click.group()
def main() -> None:
    """Feature-extractor trainer and exporter."""


@main.command("train")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "model_path", required=True, type=click.Path(dir_okay=False))
@click.option("--holdout", multiple=True, help="class name to exclude from training (repeatable)")
@click.option("--epochs", default=100, show_default=True)
@click.option("--batch-size", default=128, show_default=True)
@click.option("--per-class-cap", default=250, show_default=True)
@click.option("--seed", default=0, show_default=True)
def train_cmd(data_dir, model_path, holdout, epochs, batch_size, per_class_cap, seed):
    """Fine-tune the backbone+bottleneck on a labeled image folder."""
    config = FeatureTrainingConfig(
        batch_size=batch_size,
        per_class_cap=per_class_cap,
        max_epochs=epochs,
        seed=seed,
        holdout_classes=frozenset(holdout),
    )
    images = scan_image_folder(data_dir)
    result = train(config, images)
    save_checkpoint(result.model, model_path)
    click.echo(
        f"trained {result.epochs} epochs: val loss {result.val_loss:.4f}, "
        f"val accuracy {result.val_accuracy:.3f}; saved {model_path}"
    )


@main.command("extract")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "features_path", required=True, type=click.Path(dir_okay=False))
@click.option("--labels", "sidecar_path", type=click.Path(dir_okay=False), default=None)
def extract_cmd(model_path, data_dir, features_path, sidecar_path):
    """Run the decapitated network over an image folder and write features."""
    model = load_checkpoint(model_path)
    images = scan_image_folder(data_dir)
    feats = export(model, images, features_path, sidecar_path)
    click.echo(f"extracted {feats.shape[0]} x {feats.shape[1]} features to {features_path}")


@main.command("toyset")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--per-class", default=50, show_default=True)
@click.option("--seed", default=0, show_default=True)
def toyset_cmd(out_dir, per_class, seed):
    """Generate the five-class toy shape dataset."""
    root = generate_toy_dataset(out_dir, per_class=per_class, seed=seed)
    counts = {p.name: len(list(p.iterdir())) for p in sorted(Path(root).iterdir())}
    click.echo(json.dumps(counts))


if __name__ == "__main__":
    main()
