"""Tests for model checkpoints."""

import numpy as np
import pytest

from src.errors import CheckpointError
from src.services.checkpoint import load_checkpoint, save_checkpoint
from src.services.inference import predict_joint


class TestCheckpoint:
    """Tests for saving and loading parameters."""

    def test_roundtrip_is_exact(self, tiny_params, path3, tmp_path):
        tiny_params.recon_weight = 0.3
        tiny_params.seen_regions = np.array([True, False, True])
        tiny_params.x_mean = np.array([1.0, 2.0, 3.0])
        path = save_checkpoint(tmp_path / "model.npz", tiny_params, path3)
        params, graph = load_checkpoint(path)

        assert graph == path3
        assert params.config == tiny_params.config
        assert params.recon_weight == 0.3
        np.testing.assert_array_equal(params.seen_regions, tiny_params.seen_regions)
        np.testing.assert_array_equal(params.x_mean, tiny_params.x_mean)
        assert list(params.tensors) == list(tiny_params.tensors)
        for name, tensor in tiny_params.tensors.items():
            np.testing.assert_array_equal(params.tensors[name], tensor)

    def test_predictions_identical_after_reload(self, tiny_params, path3, tmp_path):
        params, _ = load_checkpoint(save_checkpoint(tmp_path / "model.npz", tiny_params, path3))
        X = np.random.default_rng(0).normal(size=(10, 3))
        eps = np.random.default_rng(1).normal(size=(50, 2))
        before = predict_joint(X, tiny_params, eps=eps).cells.stack()
        after = predict_joint(X, params, eps=eps).cells.stack()
        np.testing.assert_array_equal(before, after)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "nope.npz")

    def test_foreign_archive(self, tmp_path):
        path = tmp_path / "other.npz"
        np.savez(path, values=np.arange(3))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_corrupt_file(self, tmp_path):
        path = tmp_path / "bad.npz"
        path.write_bytes(b"not an archive")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)
