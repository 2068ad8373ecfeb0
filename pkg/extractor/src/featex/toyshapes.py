"""Toy shape image generator: five grayscale classes for desk-scale tests.

Classes: disk, box, cross, ring, stripes.  Each image varies position,
size, rotation, brightness, and pixel noise, so the classifier has
something to learn but the classes stay clearly separable.
"""

from __future__ import annotations

import random
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

CLASSES = ("disk", "box", "cross", "ring", "stripes")


def _draw_shape(cls: str, rng: random.Random, size: int) -> Image.Image:
    img = Image.new("L", (size, size), color=0)
    draw = ImageDraw.Draw(img)
    cx = rng.randint(size * 3 // 8, size * 5 // 8)
    cy = rng.randint(size * 3 // 8, size * 5 // 8)
    r = rng.randint(size // 6, size // 3)
    fill = rng.randint(140, 255)

    if cls == "disk":
        draw.ellipse([cx - r, cy - r, cx + r, cy + r], fill=fill)
    elif cls == "box":
        draw.rectangle([cx - r, cy - r, cx + r, cy + r], outline=fill, width=max(2, r // 4))
    elif cls == "cross":
        w = max(2, r // 3)
        draw.rectangle([cx - r, cy - w, cx + r, cy + w], fill=fill)
        draw.rectangle([cx - w, cy - r, cx + w, cy + r], fill=fill)
    elif cls == "ring":
        width = max(2, r // 5)
        draw.ellipse([cx - r, cy - r, cx + r, cy + r], outline=fill, width=width)
        r2 = r // 2
        draw.ellipse([cx - r2, cy - r2, cx + r2, cy + r2], outline=fill, width=width)
    elif cls == "stripes":
        gap = max(4, r // 2)
        for x in range(cx - r, cx + r, gap):
            draw.line([x, cy - r, x, cy + r], fill=fill, width=max(2, gap // 3))
    else:
        raise ValueError(f"unknown class {cls!r}")

    img = img.rotate(rng.uniform(0, 360), resample=Image.BILINEAR, center=(cx, cy))
    arr = np.asarray(img, dtype=np.float32)
    arr += rng.gauss(0, 1) * 2 + np.random.default_rng(rng.getrandbits(32)).normal(
        0, 6, arr.shape
    )
    return Image.fromarray(np.clip(arr, 0, 255).astype(np.uint8), mode="L")


def generate_toy_dataset(
    root: str | Path,
    per_class: int = 50,
    size: int = 128,
    seed: int = 0,
    classes: tuple[str, ...] = CLASSES,
) -> Path:
    """Write a class-per-subdirectory image folder; returns its path."""
    root = Path(root)
    rng = random.Random(seed)
    for cls in classes:
        class_dir = root / cls
        class_dir.mkdir(parents=True, exist_ok=True)
        for i in range(per_class):
            _draw_shape(cls, rng, size).save(class_dir / f"{cls}-{i:04d}.png")
    return root
