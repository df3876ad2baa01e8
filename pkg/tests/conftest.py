import numpy as np
import pytest
import torch

from mciscreen.model import ClassifierConfig, FusionConfig


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_arch():
    """4-layer, 6-dim inputs into a deliberately small classifier."""
    return ClassifierConfig(layer_count=4, feature_dim=6, hidden_size=16,
                            num_layers=2, proj_dim=8, dropout=0.1)


@pytest.fixture
def tiny_fusion():
    return FusionConfig(init_mode="prior", major_layer=3, major_weight=2.0)
