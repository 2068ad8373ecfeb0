"""Feature extraction and engine-compatible file output.

The decapitated network maps every image to a bottleneck vector; vectors
are written in the engine's binary feature format (magic ``MCFT``, version
1, little-endian header, float32 rows) with a CSV labels sidecar
(``object_id,role,label``).
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np
import torch

from .data import LabeledImage, load_batch
from .model import BottleneckClassifier

_HEADER = struct.Struct("<4sIQI")
_ID_LEN = struct.Struct("<H")


def extract(
    model: BottleneckClassifier,
    images: list[LabeledImage],
    batch_size: int = 64,
) -> tuple[list[str], np.ndarray]:
    """Bottleneck features for the images, in their given order."""
    model.eval()
    rows = []
    with torch.no_grad():
        for start in range(0, len(images), batch_size):
            chunk = images[start : start + batch_size]
            batch = load_batch(chunk, model.config.input_size)
            rows.append(model.features(batch).numpy().astype(np.float32))
    feats = np.vstack(rows) if rows else np.empty((0, model.config.bottleneck_dim), np.float32)
    if not np.all(np.isfinite(feats)):
        raise ValueError("non-finite feature values produced")
    return [img.object_id for img in images], feats


def write_feature_file(path: str | Path, ids: list[str], features: np.ndarray) -> None:
    features = np.asarray(features, dtype=np.float32)
    if features.ndim != 2 or len(ids) != features.shape[0]:
        raise ValueError("ids and feature rows disagree")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(b"MCFT", 1, len(ids), features.shape[1]))
        for oid, row in zip(ids, features):
            raw = oid.encode("utf-8")
            f.write(_ID_LEN.pack(len(raw)))
            f.write(raw)
            f.write(row.astype("<f4", copy=False).tobytes())


def write_sidecar(
    path: str | Path,
    images: list[LabeledImage],
    holdout_classes: frozenset[str] = frozenset(),
    role_by_id: dict[str, str] | None = None,
) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["object_id", "role", "label"])
        for img in images:
            if img.label in holdout_classes:
                role = "indicator"
            elif role_by_id is not None:
                role = role_by_id.get(img.object_id, "unlabeled")
            else:
                role = "unlabeled"
            writer.writerow([img.object_id, role, img.label])


def export(
    model: BottleneckClassifier,
    images: list[LabeledImage],
    features_path: str | Path,
    sidecar_path: str | Path | None = None,
    batch_size: int = 64,
) -> np.ndarray:
    """Extract features and write the feature file (plus optional sidecar)."""
    ids, feats = extract(model, images, batch_size=batch_size)
    write_feature_file(features_path, ids, feats)
    if sidecar_path is not None:
        write_sidecar(sidecar_path, images, model.config.holdout_classes)
    return feats
