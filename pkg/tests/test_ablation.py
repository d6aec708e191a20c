"""Tests for the benchmark grid."""

import pytest

from src.errors import ConfigError
from src.services.ablation import RESULT_COLUMNS, AblationGrid, expand_jobs, run_ablation
from src.services.baselines import Variant
from src.services.scvae_model import ModelConfig
from src.services.trainer import TrainConfig
from src.utils.config_file import build_model


class TestGrid:
    """Tests for grid parsing and expansion."""

    def test_comma_lists(self):
        grid = build_model(AblationGrid, {"n": "1000,4000", "variants": "logistic,vae_copula"})
        assert grid.n == [1000, 4000]
        assert grid.variants == [Variant.LOGISTIC, Variant.VAE_COPULA]

    def test_unknown_variant(self):
        with pytest.raises(ConfigError):
            build_model(AblationGrid, {"variants": "logistic,forest"})

    def test_counting(self):
        grid = AblationGrid(n=[1000, 4000], seeds=[0, 1, 2])
        jobs = expand_jobs(grid, {}, ModelConfig(), TrainConfig())
        assert len(jobs) == 6
        assert [job.cell_id for job in jobs] == ["C001"] * 3 + ["C002"] * 3
        assert sum(len(job.variants) for job in jobs) == 6 * len(grid.variants)

    def test_job_carries_seed_and_weight(self):
        grid = AblationGrid(recon_weight=[0.5], seeds=[7])
        job = expand_jobs(grid, {"n_regions": 16}, ModelConfig(), TrainConfig())[0]
        assert job.train.seed == 7
        assert job.train.recon_weight == 0.5
        assert job.sim.seed == 7
        assert job.sim.n_regions == 16

    def test_bad_simulation_key(self):
        with pytest.raises(ConfigError) as exc:
            expand_jobs(AblationGrid(), {"colour": "red"}, ModelConfig(), TrainConfig(), {"sim.colour": 4})
        assert exc.value.line == 4
        assert exc.value.key == "sim.colour"


class TestRunAblation:
    """Tests for running the grid."""

    def test_empty_grid(self):
        results = run_ablation(AblationGrid(seeds=[]))
        assert results.empty
        assert list(results.columns) == RESULT_COLUMNS

    @pytest.mark.slow
    def test_small_grid(self):
        grid = AblationGrid(n=[300], seeds=[0, 1], variants=[Variant.LOGISTIC, Variant.VAE_COPULA], samples=20)
        model = ModelConfig(d=2, encoder_hidden=[4], decoder_hidden=[4], predictor_hidden=[3])
        train = TrainConfig(max_epochs=2, batch_size=64)
        results = run_ablation(grid, {"n_regions": 9, "p": 3, "d": 2}, model, train)
        assert len(results) == 4
        assert (results["status"] == "ok").all()
        assert results["auc_y1"].between(0, 1).all()
        assert results.loc[results["variant"] == "logistic", "alpha_hat"].isna().all()
        assert (results["seconds"] > 0).all()
