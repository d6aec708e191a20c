"""Shared fixtures: a small simulated dataset and a tiny model."""

import numpy as np
import pytest

from src.services.scvae_model import ModelConfig, init_params
from src.services.spatial_graph import path_graph
from src.services.synthetic_data import SimConfig, generate
from src.services.trainer import TrainConfig


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: trains models or draws large samples")


@pytest.fixture
def small_sim():
    """200 rows over a 3x3 grid, 4 covariates, 2 latent dimensions."""
    return generate(SimConfig(n=200, n_regions=9, d=2, p=4, seed=0))


@pytest.fixture
def tiny_model_config():
    return ModelConfig(d=2, encoder_hidden=[6], decoder_hidden=[6], predictor_hidden=[4])


@pytest.fixture
def fast_train_config():
    return TrainConfig(max_epochs=3, batch_size=64, patience=5, learning_rate=1e-2)


@pytest.fixture
def path3():
    return path_graph(3, rho=0.9)


@pytest.fixture
def tiny_params(path3):
    """Untrained parameters for p=3, d=2 on a 3-region path."""
    config = ModelConfig(p=3, d=2, encoder_hidden=[4], decoder_hidden=[4], predictor_hidden=[3])
    return init_params(config, path3.L, np.random.default_rng(7))
