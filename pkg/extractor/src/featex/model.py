"""Backbone plus 32-d bottleneck plus classifier head."""

from __future__ import annotations

import torch
from torch import nn
from torchvision import models

from .config import FeatureTrainingConfig


class BottleneckClassifier(nn.Module):
    """CNN backbone, a linear bottleneck, and a linear classifier.

    ``features()`` (the decapitated network) is what the engine consumes:
    the backbone's pooled output compressed to the bottleneck width.
    """

    def __init__(self, config: FeatureTrainingConfig, class_names: list[str]):
        super().__init__()
        if config.backbone != "resnet18":
            raise ValueError(f"unsupported backbone {config.backbone!r}")
        weights = models.ResNet18_Weights.IMAGENET1K_V1 if config.pretrained else None
        backbone = models.resnet18(weights=weights)
        backbone_dim = backbone.fc.in_features
        backbone.fc = nn.Identity()
        self.backbone = backbone
        self.bottleneck = nn.Linear(backbone_dim, config.bottleneck_dim)
        self.classifier = nn.Linear(config.bottleneck_dim, len(class_names))
        self.class_names = list(class_names)
        self.config = config

    def features(self, x: torch.Tensor) -> torch.Tensor:
        return self.bottleneck(self.backbone(x))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.classifier(self.features(x))


def save_checkpoint(model: BottleneckClassifier, path) -> None:
    torch.save(
        {
            "state_dict": model.state_dict(),
            "class_names": model.class_names,
            "config": model.config.__dict__ | {
                "holdout_classes": sorted(model.config.holdout_classes)
            },
        },
        path,
    )


def load_checkpoint(path) -> BottleneckClassifier:
    from .config import FeatureTrainingConfig

    raw = torch.load(path, map_location="cpu", weights_only=False)
    cfg_dict = dict(raw["config"])
    cfg_dict["holdout_classes"] = frozenset(cfg_dict.get("holdout_classes", ()))
    config = FeatureTrainingConfig(**cfg_dict)
    model = BottleneckClassifier(config, raw["class_names"])
    model.load_state_dict(raw["state_dict"])
    model.eval()
    return model
