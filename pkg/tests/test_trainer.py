"""Tests for splitting and the training loop."""

import numpy as np
import pandas as pd
import pytest

from src.errors import Diverged, InvalidParameter, TooFewRegions
from src.services.dataset import Dataset
from src.services.scvae_model import ModelConfig, init_params
from src.services.spatial_graph import square_grid
from src.services.trainer import (
    HISTORY_COLUMNS,
    Objective,
    TrainConfig,
    VaeObjective,
    fit,
    optimize,
    split,
    validation_split,
)
from src.utils.seeding import stream


def make_data(n: int, n_regions: int = 10) -> Dataset:
    rng = np.random.default_rng(0)
    return Dataset(
        X=rng.normal(loc=3.0, scale=2.0, size=(n, 3)),
        Y=rng.integers(0, 2, size=(n, 2)),
        region=np.arange(n) % n_regions,
        feature_names=["a", "b", "c"],
    )


class QuadraticObjective(Objective):
    """Mean squared distance to a target; validation loss is scripted when given."""

    def __init__(self, target: np.ndarray, val_losses: list[float] | None = None):
        self.w = {"w": np.zeros_like(target)}
        self.target = target
        self.val_losses = val_losses
        self.calls = 0

    def trainable(self):
        return self.w

    def step(self, idx, rng):
        diff = self.w["w"] - self.target
        return float(diff @ diff), {}, {"w": 2 * diff}

    def validation_loss(self):
        if self.val_losses is None:
            diff = self.w["w"] - self.target
            return float(diff @ diff)
        value = self.val_losses[min(self.calls, len(self.val_losses) - 1)]
        self.calls += 1
        return value

    def summary(self):
        return {"tau": float("nan"), "alpha": 1.0}


class TestSplit:
    """Tests for the train/test split."""

    def test_fraction_without_holdout(self):
        train, test = split(make_data(100), 0.8, seed=0, holdout_regions=0)
        assert (train.n, test.n) == (80, 20)

    def test_same_seed_same_split(self):
        a_train, _ = split(make_data(100), seed=3)
        b_train, _ = split(make_data(100), seed=3)
        np.testing.assert_array_equal(a_train.obs_id, b_train.obs_id)

    def test_held_out_regions_only_in_test(self):
        train, test = split(make_data(200), seed=1, holdout_regions=2)
        held = set(np.unique(test.region)) - set(np.unique(train.region))
        assert len(held) == 2
        assert train.n + test.n == 200

    def test_default_holdout_is_at_least_one_region(self):
        train, _ = split(make_data(100), seed=0)
        assert len(np.unique(train.region)) == 9

    def test_standardized_on_train(self):
        train, test = split(make_data(300), seed=0)
        np.testing.assert_allclose(train.X.mean(axis=0), 0.0, atol=1e-12)
        assert test.standardization is train.standardization
        assert abs(test.X.mean()) < 0.5

    def test_too_few_rows(self):
        with pytest.raises(InvalidParameter):
            split(make_data(9), seed=0)

    def test_too_many_held_out_regions(self):
        with pytest.raises(TooFewRegions):
            split(make_data(100), seed=0, holdout_regions=10)

    def test_validation_split_tiny_set_validates_on_itself(self):
        fit_idx, val_idx = validation_split(5, 0.1, seed=0)
        np.testing.assert_array_equal(fit_idx, val_idx)

    def test_validation_noise_has_its_own_stream(self):
        data = make_data(50)
        config = ModelConfig(p=3, d=2, encoder_hidden=[4], decoder_hidden=[4], predictor_hidden=[3])
        params = init_params(config, 10, np.random.default_rng(0))
        fit_idx, val_idx = validation_split(data.n, 0.2, seed=7)
        objective = VaeObjective(params, square_grid(10), data.subset(fit_idx), data.subset(val_idx), seed=7)
        expected = stream(7, "val_eps").standard_normal((len(val_idx), 2))
        np.testing.assert_array_equal(objective._val_eps, expected)
        assert not np.allclose(objective._val_eps, stream(7, "validation").standard_normal((len(val_idx), 2)))


class TestOptimize:
    """Tests for the Adam loop and early stopping."""

    def test_converges_on_quadratic(self):
        objective = QuadraticObjective(np.array([1.0, -2.0]))
        config = TrainConfig(max_epochs=400, learning_rate=0.05, batch_size=10, patience=400)
        history, _, _, best = optimize(objective, 10, config)
        assert best < 1e-3
        assert history[-1].loss < history[0].loss

    def test_early_stop_restores_best(self):
        objective = QuadraticObjective(np.array([1.0]), val_losses=[1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        history, best_epoch, stopped, best = optimize(objective, 4, TrainConfig(max_epochs=50, patience=3,
                                                                                batch_size=4))
        assert best_epoch == 0
        assert stopped == 3
        assert len(history) == 3
        assert best == 1.0
        np.testing.assert_array_equal(objective.w["w"], [0.0])

    def test_divergence(self):
        objective = QuadraticObjective(np.array([1.0]), val_losses=[1.0, 50.0])
        with pytest.raises(Diverged):
            optimize(objective, 4, TrainConfig(max_epochs=5, batch_size=4))


class TestFit:
    """Tests for fitting the copula VAE."""

    def test_zero_epochs_returns_initial_parameters(self, small_sim, tiny_model_config):
        data, truth = small_sim
        train, _ = split(data, seed=0)
        config = TrainConfig(max_epochs=0, seed=4)
        result = fit(train, truth.graph, tiny_model_config, config)
        assert result.history == []
        assert list(result.history_frame().columns) == HISTORY_COLUMNS
        fresh = init_params(result.params.config, truth.graph.L, stream(4, "init"))
        for name, tensor in fresh.tensors.items():
            np.testing.assert_array_equal(result.params.tensors[name], tensor)

    def test_metadata(self, small_sim, tiny_model_config, fast_train_config):
        data, truth = small_sim
        train, _ = split(data, seed=0)
        result = fit(train, truth.graph, tiny_model_config,
                     fast_train_config.model_copy(update={"recon_weight": 0.25}))
        params = result.params
        assert params.recon_weight == 0.25
        assert params.config.p == data.p
        np.testing.assert_array_equal(params.x_mean, train.standardization.mean)
        assert params.seen_regions.sum() == len(np.unique(train.region))
        assert len(result.history) == result.stopped_epoch

    def test_same_seed_same_history(self, small_sim, tiny_model_config, fast_train_config):
        data, truth = small_sim
        train, _ = split(data, seed=0)
        a = fit(train, truth.graph, tiny_model_config, fast_train_config).history_frame()
        b = fit(train, truth.graph, tiny_model_config, fast_train_config).history_frame()
        pd.testing.assert_frame_equal(a, b)

    @pytest.mark.slow
    def test_training_loss_decreases(self, small_sim, tiny_model_config):
        data, truth = small_sim
        train, _ = split(data, seed=0)
        config = TrainConfig(max_epochs=15, batch_size=32, patience=15, learning_rate=1e-2)
        history = fit(train, truth.graph, tiny_model_config, config).history
        assert history[-1].loss < history[0].loss
