import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from haste.tensor_store import LabelVector, PredictionMatrix


@pytest.fixture
def two_sample_instance():
    """The worked 2-sample example used across metric and bound tests."""
    preds = PredictionMatrix(
        rows=np.array([[0.8, 0.2], [0.3, 0.7]], dtype=np.float32)
    )
    labels = LabelVector(labels=np.array([0, 1]), num_classes=2)
    return preds, labels


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
