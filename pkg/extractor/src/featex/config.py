"""Training configuration for the feature extractor."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class FeatureTrainingConfig:
    """Fine-tuning hyperparameters.

    Grayscale images are scaled to [0, 1], padded to a square with a
    minimum edge of ``input_size`` pixels (larger images are shrunk), and
    augmented with right-angle rotations, horizontal/vertical flips, and
    additive Gaussian noise.  The learning rate starts at ``initial_lr``
    and is decayed whenever the weighted validation loss plateaus; training
    stops once it falls below ``final_lr``.
    """

    backbone: str = "resnet18"
    input_size: int = 128
    batch_size: int = 128
    initial_lr: float = 1e-4
    final_lr: float = 1e-8
    per_class_cap: int = 250
    bottleneck_dim: int = 32
    noise_sigma: float = 0.001
    lr_patience: int = 2
    lr_factor: float = 0.1
    max_epochs: int = 100
    val_fraction: float = 0.2
    seed: int = 0
    pretrained: bool = False  # ImageNet weights need network access to the model zoo
    holdout_classes: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        for name in ("input_size", "batch_size", "per_class_cap", "bottleneck_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.initial_lr:
            raise ValueError("initial_lr must be positive")
        if not 0.0 < self.final_lr <= self.initial_lr:
            raise ValueError("final_lr must be in (0, initial_lr]")
