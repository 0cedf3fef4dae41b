import numpy as np
import pytest
import torch
from PIL import Image
from torch import nn


class TinyConvNet(nn.Module):
    """Small two-block CNN with the layer naming the extractor expects."""

    def __init__(self, num_classes=3):
        super().__init__()
        self.stem = nn.Conv2d(3, 4, 3, padding=1)
        self.block1 = nn.Sequential(nn.Conv2d(4, 6, 3, padding=1), nn.ReLU())
        self.block2 = nn.Sequential(nn.Conv2d(6, 8, 3, stride=2, padding=1), nn.ReLU())
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.head = nn.Linear(8, num_classes)

    def forward(self, x):
        x = self.stem(x)
        x = self.block1(x)
        x = self.block2(x)
        x = self.pool(x).flatten(1)
        return self.head(x)


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory):
    """Two classes, two tiny images each, deterministic pixel content."""
    root = tmp_path_factory.mktemp("images")
    rng = np.random.default_rng(0)
    for class_name in ("cats", "dogs"):
        class_dir = root / class_name
        class_dir.mkdir()
        for i in range(2):
            pixels = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
            Image.fromarray(pixels, "RGB").save(class_dir / f"img_{i}.png")
    return root


@pytest.fixture(scope="session")
def toy_model_path(tmp_path_factory):
    torch.manual_seed(7)
    model = TinyConvNet()
    model.eval()
    path = tmp_path_factory.mktemp("models") / "tiny.pt"
    torch.save(model, path)
    return path
