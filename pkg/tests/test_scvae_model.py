"""Tests for the copula VAE networks and ELBO."""

import math

import numpy as np
import pytest

from src.errors import DimensionMismatch, UnknownRegion
from src.services import gumbel_copula as gc
from src.services.scvae_model import (
    Batch,
    EncoderOutput,
    ModelConfig,
    decode,
    elbo_batch,
    elbo_gradient,
    encode,
    init_params,
    kl_z,
    mu_prior_penalty,
    predict_heads,
    probit_marginal,
    region_mu_rows,
    reparameterize,
    unseen_region_means,
)
from src.services.spatial_graph import path_graph


def zero_params(params):
    for tensor in params.tensors.values():
        tensor[...] = 0.0
    return params


@pytest.fixture
def batch():
    rng = np.random.default_rng(3)
    return Batch(
        X=rng.normal(size=(5, 3)),
        Y=np.array([[1, 1], [1, 0], [0, 1], [0, 0], [1, 1]]),
        region=np.array([0, 1, 2, 1, 0]),
    )


class TestNetworks:
    """Tests for the encoder, decoder and outcome heads."""

    def test_zero_weights_encode_to_standard_normal(self, tiny_params):
        out = encode(np.ones(3), zero_params(tiny_params))
        np.testing.assert_array_equal(out.beta, [0.0, 0.0])
        np.testing.assert_array_equal(out.kappa, [0.0, 0.0])
        np.testing.assert_array_equal(out.variance, [1.0, 1.0])

    def test_encode_is_deterministic(self, tiny_params):
        x = np.array([[0.3, -1.0, 2.0]])
        a, b = encode(x, tiny_params), encode(x, tiny_params)
        np.testing.assert_array_equal(a.beta, b.beta)
        np.testing.assert_array_equal(a.kappa, b.kappa)

    def test_single_layer_by_hand(self):
        config = ModelConfig(p=2, d=2, encoder_hidden=[], decoder_hidden=[], predictor_hidden=[])
        params = init_params(config, 1, np.random.default_rng(0))
        params.tensors["encoder.mu.weight"][...] = [[1.0, 2.0], [3.0, 4.0]]
        params.tensors["encoder.mu.bias"][...] = [0.5, -0.5]
        out = encode(np.array([1.0, 1.0]), params)
        np.testing.assert_allclose(out.beta, [3.5, 6.5], atol=1e-12)

    def test_decoder_and_heads_return_final_biases(self, tiny_params):
        params = zero_params(tiny_params)
        params.tensors["decoder.1.bias"][...] = [1.0, 2.0, 3.0]
        params.tensors["predictor.1.bias"][...] = [0.4, -0.6]
        z = np.array([[0.5, -0.5]])
        np.testing.assert_array_equal(decode(z, params), [[1.0, 2.0, 3.0]])
        eta1, eta2 = predict_heads(z, params)
        assert eta1[0] == 0.4 and eta2[0] == -0.6

    def test_wrong_input_width(self, tiny_params):
        with pytest.raises(DimensionMismatch):
            encode(np.ones(4), tiny_params)
        with pytest.raises(DimensionMismatch):
            decode(np.ones(3), tiny_params)

    def test_reparameterize(self):
        out = EncoderOutput(beta=np.array([0.5, -1.0]), kappa=np.zeros(2))
        np.testing.assert_array_equal(reparameterize(out, np.zeros(2)), out.beta)
        np.testing.assert_array_equal(reparameterize(out, np.ones(2)), out.beta + 1.0)

    def test_probit_marginal(self):
        assert probit_marginal(1.0) == pytest.approx(0.841345, abs=1e-6)
        assert probit_marginal(-40.0) == gc.PROB_FLOOR
        assert probit_marginal(40.0) == 1.0 - gc.PROB_FLOOR


class TestPriorTerms:
    """Tests for the KL and region-mean penalty."""

    def test_kl_identical(self):
        out = EncoderOutput(beta=np.array([0.2, 0.4]), kappa=np.zeros(2))
        assert kl_z(out, np.array([0.2, 0.4]), 1.0) == pytest.approx(0.0, abs=1e-15)

    def test_kl_unit_shift(self):
        out = EncoderOutput(beta=np.array([1.0, 1.0]), kappa=np.zeros(2))
        assert kl_z(out, np.zeros(2), 1.0) == pytest.approx(1.0)

    def test_penalty_at_zero(self, path3):
        assert mu_prior_penalty(np.zeros((3, 2)), path3, 1.0) == pytest.approx(0.0)

    def test_penalty_log_tau(self, path3):
        assert mu_prior_penalty(np.zeros((3, 2)), path3, math.e) == pytest.approx(-3.0)

    def test_penalty_shape(self, path3):
        with pytest.raises(DimensionMismatch):
            mu_prior_penalty(np.zeros((4, 2)), path3, 1.0)


class TestRegionMeans:
    """Tests for borrowed means of unseen regions."""

    def test_unseen_region_uses_seen_neighbours(self, tiny_params, path3):
        tiny_params.tensors["mu_table"][...] = [[1.0, 2.0], [5.0, 5.0], [3.0, 4.0]]
        tiny_params.seen_regions = np.array([True, False, True])
        table = unseen_region_means(tiny_params, path3)
        np.testing.assert_allclose(table[1], [2.0, 3.0])
        rows, direct = region_mu_rows(tiny_params, np.array([0, 1]), path3)
        np.testing.assert_allclose(rows, [[1.0, 2.0], [2.0, 3.0]])
        np.testing.assert_array_equal(direct, [True, False])

    def test_unseen_without_seen_neighbours_uses_global_mean(self, tiny_params):
        graph = path_graph(4)
        params = init_params(tiny_params.config, graph.L, np.random.default_rng(0))
        params.tensors["mu_table"][...] = [[1.0, 2.0], [3.0, 0.0], [9.0, 9.0], [7.0, 7.0]]
        params.seen_regions = np.array([True, True, False, False])
        table = unseen_region_means(params, graph)
        np.testing.assert_allclose(table[2], [3.0, 0.0])
        np.testing.assert_allclose(table[3], [2.0, 1.0])
        np.testing.assert_allclose(table[:2], [[1.0, 2.0], [3.0, 0.0]])

    def test_unknown_region(self, tiny_params, path3):
        with pytest.raises(UnknownRegion):
            region_mu_rows(tiny_params, np.array([3]), path3)


class TestElbo:
    """Tests for the weighted ELBO and its gradient."""

    def test_zero_recon_weight_drops_reconstruction(self, tiny_params, path3, batch):
        tiny_params.recon_weight = 0.0
        eps = np.random.default_rng(0).normal(size=(5, 2))
        result = elbo_batch(batch, tiny_params, path3, eps)
        b = result.breakdown
        assert result.loss == pytest.approx(-(b.recon_y - b.kl_z) + b.kl_mu, rel=1e-14)

    def test_duplicated_batch_doubles_data_terms(self, tiny_params, path3, batch):
        tiny_params.tensors["mu_table"][...] = np.random.default_rng(1).normal(size=(3, 2))
        eps = np.random.default_rng(0).normal(size=(5, 2))
        doubled = Batch(np.vstack([batch.X, batch.X]), np.vstack([batch.Y, batch.Y]),
                        np.concatenate([batch.region, batch.region]))
        one = elbo_batch(batch, tiny_params, path3, eps).breakdown
        two = elbo_batch(doubled, tiny_params, path3, np.vstack([eps, eps])).breakdown
        assert two.recon_y == pytest.approx(2 * one.recon_y, rel=1e-13)
        assert two.recon_x == pytest.approx(2 * one.recon_x, rel=1e-13)
        assert two.kl_z == pytest.approx(2 * one.kl_z, rel=1e-13)
        assert two.kl_mu == one.kl_mu

    def test_eps_shape(self, tiny_params, path3, batch):
        with pytest.raises(DimensionMismatch):
            elbo_batch(batch, tiny_params, path3, np.zeros((5, 3)))

    @pytest.mark.parametrize("seed", range(20))
    def test_gradient_matches_finite_differences(self, tiny_params, path3, batch, seed):
        rng = np.random.default_rng(seed)
        params = init_params(tiny_params.config, path3.L, rng)
        params.tensors["mu_table"][...] = rng.normal(scale=0.5, size=(3, 2))
        params.tensors["raw_alpha"][...] = gc.raw_from_alpha(rng.uniform(1.2, 4.0))
        params.tensors["raw_tau"][...] = math.log(rng.uniform(0.5, 2.0))
        params.recon_weight = rng.uniform(0.2, 1.5)
        eps = rng.normal(size=(5, 2))
        _, grads = elbo_gradient(batch, params, path3, eps, data_scale=2.0)

        h = 1e-6
        for name, tensor in params.tensors.items():
            numeric = np.zeros_like(tensor)
            for idx in np.ndindex(tensor.shape):
                saved = tensor[idx]
                tensor[idx] = saved + h
                up = elbo_batch(batch, params, path3, eps, data_scale=2.0).loss
                tensor[idx] = saved - h
                down = elbo_batch(batch, params, path3, eps, data_scale=2.0).loss
                tensor[idx] = saved
                numeric[idx] = (up - down) / (2 * h)
            np.testing.assert_allclose(grads[name], numeric, rtol=1e-5, atol=1e-6, err_msg=name)

    def test_alpha_floor_matches_independent_outcomes(self, tiny_params, path3, batch):
        tiny_params.tensors["mu_table"][...] = np.random.default_rng(2).normal(size=(3, 2))
        tiny_params.tensors["raw_alpha"][...] = -1000.0
        assert tiny_params.alpha == gc.ALPHA_MIN
        independent = tiny_params.copy()
        independent.config = independent.config.model_copy(update={"copula": False})
        eps = np.random.default_rng(4).normal(size=(5, 2))
        coupled = elbo_batch(batch, tiny_params, path3, eps)
        plain = elbo_batch(batch, independent, path3, eps)
        assert coupled.loss == pytest.approx(plain.loss, abs=1e-5)
        assert coupled.breakdown.recon_x == plain.breakdown.recon_x
        assert coupled.breakdown.kl_z == plain.breakdown.kl_z

    def test_breakdown_uses_prior_helpers(self, tiny_params, path3, batch):
        rng = np.random.default_rng(6)
        tiny_params.tensors["mu_table"][...] = rng.normal(size=(3, 2))
        tiny_params.tensors["raw_tau"][...] = math.log(1.3)
        eps = rng.normal(size=(5, 2))
        breakdown = elbo_batch(batch, tiny_params, path3, eps).breakdown
        enc = encode(batch.X, tiny_params)
        rows, _ = region_mu_rows(tiny_params, batch.region, path3)
        expected_kl = np.sum(kl_z(enc, rows, tiny_params.config.prior_z_variance))
        assert breakdown.kl_z == pytest.approx(expected_kl, rel=1e-12)
        assert breakdown.kl_mu == pytest.approx(mu_prior_penalty(tiny_params.mu_table, path3, 1.3), rel=1e-12)

    def test_no_copula_has_no_alpha_gradient(self, tiny_params, path3, batch):
        tiny_params.config = tiny_params.config.model_copy(update={"copula": False})
        _, grads = elbo_gradient(batch, tiny_params, path3, np.zeros((5, 2)))
        assert "raw_alpha" not in grads
        assert tiny_params.alpha == 1.0
        assert "raw_alpha" not in tiny_params.trainable_names()
