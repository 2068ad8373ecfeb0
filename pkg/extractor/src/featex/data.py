"""Image folder loading and preprocessing.

Datasets are directories with one subdirectory per class, holding
grayscale-convertible images.  Object ids are the ``class/stem`` relative
paths, which keeps them stable across runs.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


@dataclass
class LabeledImage:
    object_id: str
    path: Path
    label: str


def scan_image_folder(root: str | Path) -> list[LabeledImage]:
    """Collect images from a class-per-subdirectory layout, sorted by id."""
    root = Path(root)
    out: list[LabeledImage] = []
    for class_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for img in sorted(class_dir.iterdir()):
            if img.suffix.lower() in IMAGE_SUFFIXES:
                out.append(
                    LabeledImage(
                        object_id=f"{class_dir.name}/{img.stem}",
                        path=img,
                        label=class_dir.name,
                    )
                )
    if not out:
        raise ValueError(f"no images found under {root}")
    return out


def prepare_image(path: Path, input_size: int) -> torch.Tensor:
    """Grayscale tensor in [0, 1], padded to a square of input_size.

    Images larger than input_size are shrunk so their longer edge fits;
    smaller ones are centered on a black square canvas.
    """
    with Image.open(path) as img:
        gray = img.convert("L")
        w, h = gray.size
        longest = max(w, h)
        if longest > input_size:
            scale = input_size / longest
            gray = gray.resize(
                (max(1, round(w * scale)), max(1, round(h * scale))),
                Image.BILINEAR,
            )
            w, h = gray.size
        canvas = Image.new("L", (input_size, input_size), color=0)
        canvas.paste(gray, ((input_size - w) // 2, (input_size - h) // 2))
        arr = np.asarray(canvas, dtype=np.float32) / 255.0
    return torch.from_numpy(arr).unsqueeze(0)


def augment(batch: torch.Tensor, rng: random.Random, noise_sigma: float) -> torch.Tensor:
    """Right-angle rotation, horizontal/vertical flips, Gaussian noise."""
    k = rng.randrange(4)
    if k:
        batch = torch.rot90(batch, k, dims=(2, 3))
    if rng.random() < 0.5:
        batch = torch.flip(batch, dims=(3,))
    if rng.random() < 0.5:
        batch = torch.flip(batch, dims=(2,))
    if noise_sigma > 0:
        batch = batch + noise_sigma * torch.randn_like(batch)
    return batch


def load_batch(images: list[LabeledImage], input_size: int) -> torch.Tensor:
    tensors = [prepare_image(img.path, input_size) for img in images]
    batch = torch.stack(tensors)
    # backbone expects three channels; replicate the gray channel
    return batch.repeat(1, 3, 1, 1)


def stratified_split(
    images: list[LabeledImage], val_fraction: float, seed: int
) -> tuple[list[LabeledImage], list[LabeledImage]]:
    rng = random.Random(seed)
    by_class: dict[str, list[LabeledImage]] = {}
    for img in images:
        by_class.setdefault(img.label, []).append(img)
    train: list[LabeledImage] = []
    val: list[LabeledImage] = []
    for label in sorted(by_class):
        members = by_class[label][:]
        rng.shuffle(members)
        n_val = max(1, int(round(len(members) * val_fraction)))
        val.extend(members[:n_val])
        train.extend(members[n_val:])
    return train, val
