"""Fine-tuning loop.

Per epoch, up to ``per_class_cap`` images are drawn from each class
independently to counter imbalance.  The monitoring loss on the validation
split is weighted by inverse class size; the learning rate decays when it
plateaus, and training stops once the rate drops below ``final_lr``.
Holdout classes never enter training or the monitoring loss.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .config import FeatureTrainingConfig
from .data import LabeledImage, augment, load_batch, stratified_split
from .model import BottleneckClassifier


@dataclass
class TrainResult:
    model: BottleneckClassifier
    epochs: int
    val_loss: float
    val_accuracy: float
    history: list[dict]


def _epoch_sample(
    by_class: dict[str, list[LabeledImage]], cap: int, rng: random.Random
) -> list[LabeledImage]:
    out: list[LabeledImage] = []
    for label in sorted(by_class):
        members = by_class[label]
        if len(members) > cap:
            out.extend(rng.sample(members, cap))
        else:
            out.extend(members)
    rng.shuffle(out)
    return out


def train(
    config: FeatureTrainingConfig,
    labeled_images: list[LabeledImage],
    holdout_classes: frozenset[str] | None = None,
    stop_at_accuracy: float | None = None,
) -> TrainResult:
    """Fine-tune the backbone+bottleneck on the labeled set."""
    holdout = holdout_classes if holdout_classes is not None else config.holdout_classes
    usable = [img for img in labeled_images if img.label not in holdout]
    class_names = sorted({img.label for img in usable})
    if len(class_names) < 2:
        raise ValueError("need at least two non-holdout classes to train")

    torch.manual_seed(config.seed)
    rng = random.Random(config.seed)
    np.random.seed(config.seed)

    train_set, val_set = stratified_split(usable, config.val_fraction, config.seed)
    by_class: dict[str, list[LabeledImage]] = {}
    for img in train_set:
        by_class.setdefault(img.label, []).append(img)
    label_index = {name: i for i, name in enumerate(class_names)}

    # inverse-class-size weights for the monitoring loss
    val_counts = np.zeros(len(class_names))
    for img in val_set:
        val_counts[label_index[img.label]] += 1
    weights = torch.tensor(
        np.where(val_counts > 0, 1.0 / np.maximum(val_counts, 1), 0.0),
        dtype=torch.float32,
    )

    model = BottleneckClassifier(config, class_names)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.initial_lr)
    scheduler = torch.optim.lr_scheduler.ReduceLROnPlateau(
        optimizer, factor=config.lr_factor, patience=config.lr_patience
    )
    train_criterion = nn.CrossEntropyLoss()
    val_criterion = nn.CrossEntropyLoss(weight=weights)

    history: list[dict] = []
    val_loss = float("inf")
    val_accuracy = 0.0
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        model.train()
        epoch_images = _epoch_sample(by_class, config.per_class_cap, rng)
        for start in range(0, len(epoch_images), config.batch_size):
            chunk = epoch_images[start : start + config.batch_size]
            batch = augment(load_batch(chunk, config.input_size), rng, config.noise_sigma)
            targets = torch.tensor([label_index[img.label] for img in chunk])
            optimizer.zero_grad()
            loss = train_criterion(model(batch), targets)
            loss.backward()
            optimizer.step()

        model.eval()
        losses = []
        correct = 0
        with torch.no_grad():
            for start in range(0, len(val_set), config.batch_size):
                chunk = val_set[start : start + config.batch_size]
                batch = load_batch(chunk, config.input_size)
                targets = torch.tensor([label_index[img.label] for img in chunk])
                logits = model(batch)
                losses.append(val_criterion(logits, targets).item() * len(chunk))
                correct += int((logits.argmax(dim=1) == targets).sum())
        val_loss = sum(losses) / len(val_set)
        val_accuracy = correct / len(val_set)
        scheduler.step(val_loss)
        lr = optimizer.param_groups[0]["lr"]
        history.append(
            {"epoch": epoch, "val_loss": val_loss, "val_accuracy": val_accuracy, "lr": lr}
        )
        if lr < config.final_lr:
            break
        if stop_at_accuracy is not None and val_accuracy >= stop_at_accuracy:
            break

    model.eval()
    return TrainResult(
        model=model,
        epochs=epoch,
        val_loss=val_loss,
        val_accuracy=val_accuracy,
        history=history,
    )
