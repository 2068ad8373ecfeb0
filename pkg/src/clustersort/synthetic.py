"""Synthetic long-tailed benchmark datasets.

Gaussian blobs with Zipf-distributed class sizes plus uniform background
noise, written in the engine's feature file and labels sidecar formats.
Generation is fully deterministic per seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .store import DatasetRole, FeatureStore, save_features, save_labels


@dataclass(frozen=True)
class SyntheticSpec:
    class_count: int
    total: int
    zipf_exponent: float = 1.2
    dim: int = 32
    cluster_sigma: float = 0.1
    center_scale: float = 10.0
    noise_fraction: float = 0.0
    holdout_classes: frozenset[str] = frozenset()
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.class_count < 1:
            raise ValueError("class_count must be >= 1")
        if self.total < self.class_count:
            raise ValueError("total must cover at least one object per class")
        if not 0.0 <= self.noise_fraction < 1.0:
            raise ValueError("noise_fraction must be in [0, 1)")

    @classmethod
    def from_json(cls, path: str | Path) -> "SyntheticSpec":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        raw["holdout_classes"] = frozenset(raw.get("holdout_classes", []))
        return cls(**raw)


def class_name(i: int) -> str:
    return f"class-{i:02d}"


def zipf_sizes(total: int, class_count: int, exponent: float) -> list[int]:
    """Class sizes following the Zipf rank law, summing exactly to total.

    Rounding leftovers go to the largest class.
    """
    weights = np.arange(1, class_count + 1, dtype=np.float64) ** (-exponent)
    shares = weights / weights.sum()
    sizes = np.floor(shares * total).astype(int)
    sizes = np.maximum(sizes, 1)
    sizes[0] += total - int(sizes.sum())
    if sizes[0] < 1:
        raise ValueError("total too small for the requested class count")
    return [int(s) for s in sizes]


@dataclass
class SyntheticDataset:
    spec: SyntheticSpec
    store: FeatureStore
    truth: dict[str, str]
    class_sizes: dict[str, int] = field(default_factory=dict)


def generate_synthetic(spec: SyntheticSpec) -> SyntheticDataset:
    """Draw the dataset: separated Gaussian blobs plus uniform noise."""
    rng = np.random.default_rng(spec.rng_seed)
    noise_n = int(round(spec.total * spec.noise_fraction))
    labeled_n = spec.total - noise_n
    sizes = zipf_sizes(labeled_n, spec.class_count, spec.zipf_exponent)

    # class centers: random directions pushed apart until all pairwise
    # distances clear the blob diameter by a wide margin
    min_sep = 12.0 * spec.cluster_sigma * np.sqrt(spec.dim)
    centers = np.empty((spec.class_count, spec.dim))
    placed = 0
    while placed < spec.class_count:
        c = rng.normal(size=spec.dim)
        c = c / np.linalg.norm(c) * spec.center_scale
        if placed == 0 or np.sqrt(((centers[:placed] - c) ** 2).sum(axis=1)).min() >= min_sep:
            centers[placed] = c
            placed += 1

    ids: list[str] = []
    rows = np.empty((spec.total, spec.dim), dtype=np.float32)
    truth: dict[str, str] = {}
    class_sizes: dict[str, int] = {}
    obj = 0
    for i, size in enumerate(sizes):
        cname = class_name(i)
        class_sizes[cname] = size
        pts = rng.normal(loc=centers[i], scale=spec.cluster_sigma, size=(size, spec.dim))
        for p in pts:
            oid = f"o{obj:06d}"
            ids.append(oid)
            rows[obj] = p.astype(np.float32)
            truth[oid] = cname
            obj += 1
    span = spec.center_scale * 1.5
    for _ in range(noise_n):
        oid = f"o{obj:06d}"
        ids.append(oid)
        rows[obj] = rng.uniform(-span, span, size=spec.dim).astype(np.float32)
        truth[oid] = ""
        obj += 1

    store = FeatureStore(spec.dim, ids, rows)
    for oid, label in truth.items():
        if label:
            store.labels[oid] = label
            if label in spec.holdout_classes:
                store.roles[oid] = DatasetRole.INDICATOR
    return SyntheticDataset(spec=spec, store=store, truth=truth, class_sizes=class_sizes)


def write_dataset(
    dataset: SyntheticDataset, features_path: str | Path, labels_path: str | Path
) -> None:
    """Write the feature file and the truth sidecar CSV."""
    save_features(dataset.store, features_path)
    rows = []
    for oid in dataset.store.ids:
        label = dataset.truth.get(oid, "")
        if label and label in dataset.spec.holdout_classes:
            role = DatasetRole.INDICATOR
        else:
            role = DatasetRole.UNLABELED
        rows.append((oid, role, label))
    save_labels(labels_path, rows)
