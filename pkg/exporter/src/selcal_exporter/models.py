"""Backbone registry: model id -> (embedding extractor, logit head).

Each entry returns a torch module pair (features, head) where features maps a
batch of images to the penultimate-layer embedding and head maps embeddings to
class logits. Checkpoints are loaded from a local path when given; otherwise
the backbone is seeded deterministically (useful for format/determinism tests
and mandatory anyway, since nothing here downloads weights).
"""

from __future__ import annotations

import torch
from torch import nn


class SmallCNN(nn.Module):
    """Tiny CNN for desk-scale tests: 3x32x32 images, 32-d embedding, 10 classes."""

    def __init__(self, embed_dim: int = 32, num_classes: int = 10):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(3, 8, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(8, 16, 3, stride=2, padding=1), nn.ReLU(),
            nn.AdaptiveAvgPool2d(1), nn.Flatten(),
            nn.Linear(16, embed_dim), nn.ReLU(),
        )
        self.head = nn.Linear(embed_dim, num_classes)


def _resnet34():
    from torchvision.models import resnet34

    model = resnet34(weights=None)
    features = nn.Sequential(*list(model.children())[:-1], nn.Flatten())
    return features, model.fc


def _densenet121():
    from torchvision.models import densenet121

    model = densenet121(weights=None)
    features = nn.Sequential(
        model.features, nn.ReLU(inplace=False), nn.AdaptiveAvgPool2d(1), nn.Flatten()
    )
    return features, model.classifier


def _smallcnn():
    model = SmallCNN()
    return model.features, model.head


_REGISTRY = {
    "smallcnn": _smallcnn,
    "resnet34": _resnet34,
    "densenet121": _densenet121,
}


def build_backbone(model_id: str, checkpoint: str | None, seed: int):
    if model_id not in _REGISTRY:
        raise ValueError(f"unknown model {model_id!r}; choose from {sorted(_REGISTRY)}")
    torch.manual_seed(seed)
    features, head = _REGISTRY[model_id]()
    if checkpoint is not None:
        state = torch.load(checkpoint, map_location="cpu")
        if isinstance(state, dict) and "state_dict" in state:
            state = state["state_dict"]
        merged = nn.ModuleDict({"features": features, "head": head})
        merged.load_state_dict(state)
    features.eval()
    head.eval()
    return features, head
