"""Tests for the synthetic data generator."""

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import stats

from src.services.synthetic_data import (
    SimConfig,
    SimulatedDatasetSource,
    generate,
    inject_known_effect,
    perturb_covariates,
    true_pattern_shift,
)


class TestGenerate:
    """Tests for one synthetic draw."""

    def test_shapes(self, small_sim):
        data, truth = small_sim
        assert data.X.shape == (200, 4)
        assert data.Y.shape == (200, 2)
        assert truth.mu.shape == (9, 2)
        assert truth.z.shape == (200, 2)
        assert set(np.unique(data.Y)) <= {0, 1}
        assert data.feature_names == ["x1", "x2", "x3", "x4"]

    def test_reproducible(self):
        config = SimConfig(n=150, n_regions=9, p=3, seed=4)
        a, ta = generate(config)
        b, tb = generate(config)
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.Y, b.Y)
        np.testing.assert_array_equal(ta.mu, tb.mu)

    def test_regions_are_balanced(self, small_sim):
        data, _ = small_sim
        counts = np.bincount(data.region, minlength=9)
        assert counts.max() - counts.min() <= 1

    def test_outcomes_threshold_uniforms(self, small_sim):
        data, truth = small_sim
        np.testing.assert_array_equal(data.Y, (truth.u <= truth.pi).astype(int))

    def test_geometric_graph(self):
        data, truth = generate(SimConfig(n=100, n_regions=12, graph="geometric", seed=2))
        assert truth.graph.L == 12
        assert truth.coords.shape == (12, 2)
        assert data.region.max() < 12

    def test_edge_list_graph(self, tmp_path):
        path = tmp_path / "adj.txt"
        path.write_text("L=4\n0 1\n1 2\n2 3\n")
        _, truth = generate(SimConfig(n=40, n_regions=4, graph=str(path)))
        assert truth.graph.edges == ((0, 1), (1, 2), (2, 3))

    def test_n_below_regions_rejected(self):
        with pytest.raises(ValidationError):
            SimConfig(n=5, n_regions=9)

    def test_source_keeps_truth(self):
        source = SimulatedDatasetSource(SimConfig(n=50, n_regions=4))
        data = source.fetch()
        assert source.truth.pi.shape == (data.n, 2)
        assert source.inputs == []


@pytest.mark.slow
class TestGeneratorOracles:
    """Large-sample checks against the generator's own truth."""

    @pytest.mark.parametrize("alpha", [1.0, 2.0])
    def test_uniform_dependence(self, alpha):
        _, truth = generate(SimConfig(n=100_000, alpha_true=alpha, seed=1))
        tau = stats.kendalltau(truth.u[:, 0], truth.u[:, 1]).statistic
        assert tau == pytest.approx(1 - 1 / alpha, abs=0.01)

    def test_marginal_calibration(self):
        data, truth = generate(SimConfig(n=100_000, seed=3))
        pi = truth.pi[:, 0]
        se = np.sqrt(np.sum(pi * (1 - pi))) / data.n
        assert abs(data.Y[:, 0].mean() - pi.mean()) < 3 * se

    def test_injected_effect_raises_risk(self):
        data, truth = generate(SimConfig(n=50_000, seed=5))
        injected = inject_known_effect(data, truth, 1.0, np.random.default_rng(0))
        b = injected.dataset.X[:, -1] == 1
        y1 = injected.dataset.Y[:, 0]
        diff = y1[b].mean() - y1[~b].mean()
        se = np.sqrt(y1[b].var() / b.sum() + y1[~b].var() / (~b).sum())
        assert diff > 5 * se
        assert injected.true_ace["11"] > 0


class TestPerturbation:
    """Tests for covariate noise and injected effects."""

    def test_zero_noise_is_copy(self):
        X = np.ones((3, 2))
        out = perturb_covariates(X, 0.0, np.random.default_rng(0))
        np.testing.assert_array_equal(out, X)
        assert out is not X

    def test_noise_changes_covariates_only(self):
        clean, clean_truth = generate(SimConfig(n=100, n_regions=9, seed=0))
        noisy, noisy_truth = generate(SimConfig(n=100, n_regions=9, seed=0, noise_sigma2=0.5))
        np.testing.assert_array_equal(clean.Y, noisy.Y)
        np.testing.assert_array_equal(clean_truth.z, noisy_truth.z)
        assert not np.array_equal(clean.X, noisy.X)

    def test_zero_delta_keeps_outcomes(self, small_sim):
        data, truth = small_sim
        injected = inject_known_effect(data, truth, 0.0, np.random.default_rng(0))
        np.testing.assert_array_equal(injected.dataset.Y, data.Y)
        assert injected.dataset.feature_names[-1] == "injected"
        assert all(value == 0.0 for value in true_pattern_shift(truth.eta, 0.0, truth.alpha).values())
