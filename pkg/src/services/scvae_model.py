"""Spatially regularized copula VAE: networks, likelihood terms and the weighted ELBO.

Shapes: a batch holds B observations with p covariates; the latent space has
d dimensions; the graph has L regions. ``mu_table`` is the L x d table of
per-region point-mass means.
"""

import copy
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import ndtr

from src.errors import DimensionMismatch, NonFiniteLoss, UnknownRegion
from src.services import gumbel_copula as gc
from src.services.grad_engine import (
    Activation,
    DenseLayer,
    LayerCache,
    dense_backward,
    dense_forward,
    init_layer,
    mlp_backward,
    mlp_forward,
)
from src.services.spatial_graph import SpatialGraph, precision_matvec, quadratic_form
from src.utils.config_file import IntList

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


class ModelConfig(BaseModel):
    """Architecture and initial values of the copula VAE."""

    model_config = ConfigDict(extra="forbid")

    p: int | None = Field(default=None, ge=1)
    d: int = Field(default=5, ge=1)
    encoder_hidden: IntList = Field(default_factory=lambda: [60, 30, 20, 10])
    decoder_hidden: IntList = Field(default_factory=lambda: [10, 20, 30, 60])
    predictor_hidden: IntList = Field(default_factory=lambda: [10, 5, 3])
    recon_weight_init: float = Field(default=1.0, ge=0.0)
    tau_init: float = Field(default=1.0, gt=0.0)
    alpha_init: float = Field(default=1.5, ge=1.0)
    prior_z_variance: float = Field(default=1.0, gt=0.0)
    rho: float = Field(default=0.9, ge=0.0, lt=1.0)
    copula: bool = True
    tau_min: float = Field(default=1e-3, gt=0.0)
    tau_max: float = Field(default=1e3, gt=0.0)


@dataclass
class EncoderOutput:
    """Variational mean ``beta`` and log-variance ``kappa``."""
    beta: np.ndarray
    kappa: np.ndarray

    @property
    def variance(self) -> np.ndarray:
        return np.exp(self.kappa)


@dataclass
class Batch:
    X: np.ndarray
    Y: np.ndarray
    region: np.ndarray

    def __len__(self) -> int:
        return self.X.shape[0]


@dataclass
class ModelParams:
    """All trainable tensors plus the fixed metadata needed to use them."""

    config: ModelConfig
    tensors: dict[str, np.ndarray]
    recon_weight: float
    seen_regions: np.ndarray
    x_mean: np.ndarray
    x_scale: np.ndarray
    feature_names: list[str] = field(default_factory=list)
    seed: int = 0

    @property
    def n_regions(self) -> int:
        return self.tensors["mu_table"].shape[0]

    @property
    def mu_table(self) -> np.ndarray:
        return self.tensors["mu_table"]

    @property
    def tau(self) -> float:
        lo, hi = math.log(self.config.tau_min), math.log(self.config.tau_max)
        return math.exp(min(max(float(self.tensors["raw_tau"]), lo), hi))

    @property
    def alpha(self) -> float:
        if not self.config.copula:
            return 1.0
        return gc.alpha_from_raw(float(self.tensors["raw_alpha"]))

    def _chain(self, prefix: str) -> list[DenseLayer]:
        layers = []
        i = 0
        while f"{prefix}.{i}.weight" in self.tensors:
            layers.append(DenseLayer(self.tensors[f"{prefix}.{i}.weight"], self.tensors[f"{prefix}.{i}.bias"]))
            i += 1
        return layers

    def encoder_layers(self) -> list[DenseLayer]:
        return self._chain("encoder")

    def head(self, name: str) -> DenseLayer:
        return DenseLayer(self.tensors[f"encoder.{name}.weight"], self.tensors[f"encoder.{name}.bias"])

    def decoder_layers(self) -> list[DenseLayer]:
        return self._chain("decoder")

    def predictor_layers(self) -> list[DenseLayer]:
        return self._chain("predictor")

    def trainable_names(self) -> list[str]:
        names = list(self.tensors)
        if not self.config.copula:
            names.remove("raw_alpha")
        return names

    def standardize(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.x_mean) / self.x_scale

    def copy(self) -> "ModelParams":
        return copy.deepcopy(self)


def _add_chain(tensors: dict[str, np.ndarray], prefix: str, dims: list[int], rng: np.random.Generator):
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        layer = init_layer(a, b, rng)
        tensors[f"{prefix}.{i}.weight"] = layer.weights
        tensors[f"{prefix}.{i}.bias"] = layer.biases


def init_params(config: ModelConfig, n_regions: int, rng: np.random.Generator,
                feature_names: list[str] | None = None, seed: int = 0) -> ModelParams:
    """Fresh parameters: Glorot layers, zero region means, tau/alpha at their initial values."""
    if config.p is None:
        raise DimensionMismatch("ModelConfig.p must be set before building the model")
    p, d = config.p, config.d
    tensors: dict[str, np.ndarray] = {}
    _add_chain(tensors, "encoder", [p, *config.encoder_hidden], rng)
    top = config.encoder_hidden[-1] if config.encoder_hidden else p
    for head in ("mu", "logvar"):
        layer = init_layer(top, d, rng)
        tensors[f"encoder.{head}.weight"] = layer.weights
        tensors[f"encoder.{head}.bias"] = layer.biases
    _add_chain(tensors, "decoder", [d, *config.decoder_hidden, p], rng)
    _add_chain(tensors, "predictor", [d, *config.predictor_hidden, 2], rng)
    tensors["mu_table"] = np.zeros((n_regions, d))
    tensors["raw_tau"] = np.array(math.log(config.tau_init))
    tensors["raw_alpha"] = np.array(gc.raw_from_alpha(config.alpha_init))
    return ModelParams(
        config=config,
        tensors=tensors,
        recon_weight=config.recon_weight_init,
        seen_regions=np.ones(n_regions, dtype=bool),
        x_mean=np.zeros(p),
        x_scale=np.ones(p),
        feature_names=list(feature_names or [f"x{i + 1}" for i in range(p)]),
        seed=seed,
    )


# Network pieces

@dataclass
class _EncoderTrace:
    out: EncoderOutput
    chain: list[LayerCache]
    mu_head: LayerCache
    logvar_head: LayerCache


def _encode(x: np.ndarray, params: ModelParams) -> _EncoderTrace:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.config.p:
        raise DimensionMismatch(f"Encoder expects {params.config.p} covariates, got {x.shape[-1]}")
    h, chain = mlp_forward(params.encoder_layers(), x, final=Activation.RELU)
    beta, mu_cache = dense_forward(params.head("mu"), h, Activation.IDENTITY)
    kappa, lv_cache = dense_forward(params.head("logvar"), h, Activation.IDENTITY)
    return _EncoderTrace(EncoderOutput(beta, kappa), chain, mu_cache, lv_cache)


def encode(x: np.ndarray, params: ModelParams) -> EncoderOutput:
    """q(z|x) parameters for one covariate vector or a batch of rows."""
    return _encode(x, params).out


def reparameterize(out: EncoderOutput, eps: np.ndarray) -> np.ndarray:
    """z = beta + exp(kappa / 2) * eps."""
    eps = np.asarray(eps, dtype=float)
    if eps.shape[-1] != out.beta.shape[-1]:
        raise DimensionMismatch(f"eps has {eps.shape[-1]} dims, latent space has {out.beta.shape[-1]}")
    return out.beta + np.exp(0.5 * out.kappa) * eps


def decode(z: np.ndarray, params: ModelParams) -> np.ndarray:
    """Reconstruction mean E(x | z)."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != params.config.d:
        raise DimensionMismatch(f"Decoder expects {params.config.d} latent dims, got {z.shape[-1]}")
    xhat, _ = mlp_forward(params.decoder_layers(), z)
    return xhat


def predict_heads(z: np.ndarray, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Latent scores (eta1, eta2) behind the two binary outcomes."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != params.config.d:
        raise DimensionMismatch(f"Predictor expects {params.config.d} latent dims, got {z.shape[-1]}")
    eta, _ = mlp_forward(params.predictor_layers(), z)
    return eta[..., 0], eta[..., 1]


def probit_marginal(eta, clamp: bool = True):
    """Phi(eta), clamped away from 0 and 1 unless ``clamp`` is False."""
    p = ndtr(np.asarray(eta, dtype=float))
    if clamp:
        p = gc.clamp_probability(p)
    return p if np.ndim(p) else float(p)


def probit_slope(eta: np.ndarray) -> np.ndarray:
    """d clamp(Phi(eta)) / d eta."""
    raw = ndtr(eta)
    inside = (raw > gc.PROB_FLOOR) & (raw < 1.0 - gc.PROB_FLOOR)
    return np.exp(-0.5 * eta ** 2) / math.sqrt(2.0 * math.pi) * inside


def kl_z(out: EncoderOutput, mu_row: np.ndarray, prior_var: float):
    """KL(N(beta, diag exp(kappa)) || N(mu_row, prior_var I)), summed over latent dims."""
    diff = out.beta - mu_row
    terms = 0.5 * (math.log(prior_var) - out.kappa + (np.exp(out.kappa) + diff ** 2) / prior_var - 1.0)
    total = np.sum(terms, axis=-1)
    return total if np.ndim(total) else float(total)


def mu_prior_penalty(mu_table: np.ndarray, graph: SpatialGraph, tau: float) -> float:
    """-log p(mu_hat) up to constants: sum_k (tau/2) mu_k^T Q mu_k - (L/2) log tau."""
    mu_table = np.asarray(mu_table, dtype=float)
    if mu_table.ndim != 2 or mu_table.shape[0] != graph.L:
        raise DimensionMismatch(f"mu_table must have {graph.L} rows, got shape {mu_table.shape}")
    quad = np.asarray(quadratic_form(mu_table, graph))
    d = mu_table.shape[1]
    return float(0.5 * tau * quad.sum() - 0.5 * d * graph.L * math.log(tau))


def region_mu_rows(params: ModelParams, regions: np.ndarray, graph: SpatialGraph) -> tuple[np.ndarray, np.ndarray]:
    """Prior mean row per observation and a mask of rows taken directly from the table.

    A region never seen in training borrows the mean of its seen neighbours'
    rows, or the mean of all seen rows when no neighbour was seen.
    """
    regions = np.asarray(regions, dtype=np.int64)
    if regions.size and (regions.min() < 0 or regions.max() >= params.n_regions):
        bad = regions[(regions < 0) | (regions >= params.n_regions)][0]
        raise UnknownRegion(f"Region {bad} outside [0, {params.n_regions})")
    table = params.mu_table
    seen = params.seen_regions
    direct = seen[regions]
    rows = table[regions].copy()
    if not direct.all():
        fill = unseen_region_means(params, graph)
        rows[~direct] = fill[regions[~direct]]
    return rows, direct


def unseen_region_means(params: ModelParams, graph: SpatialGraph) -> np.ndarray:
    """Full L x d table where unseen regions carry their borrowed means."""
    table = params.mu_table.copy()
    seen = params.seen_regions
    global_mean = table[seen].mean(axis=0) if seen.any() else np.zeros(table.shape[1])
    for region in np.flatnonzero(~seen):
        nbrs = graph.neighbors(int(region))
        nbrs = nbrs[seen[nbrs]]
        table[region] = table[nbrs].mean(axis=0) if nbrs.size else global_mean
    return table


# ELBO

@dataclass
class ElboBreakdown:
    """Sums over the batch (before any data scaling)."""
    recon_y: float
    recon_x: float
    kl_z: float
    kl_mu: float


@dataclass
class ElboResult:
    loss: float
    breakdown: ElboBreakdown


def _check_finite(name: str, value: float):
    if not math.isfinite(value):
        raise NonFiniteLoss(name)


def _evaluate(batch: Batch, params: ModelParams, graph: SpatialGraph, eps: np.ndarray,
              data_scale: float, need_grad: bool):
    cfg = params.config
    X = np.asarray(batch.X, dtype=float)
    Y = np.asarray(batch.Y)
    eps = np.asarray(eps, dtype=float)
    if eps.shape != (X.shape[0], cfg.d):
        raise DimensionMismatch(f"eps must have shape {(X.shape[0], cfg.d)}, got {eps.shape}")
    if graph.L != params.n_regions:
        raise DimensionMismatch(f"Graph has {graph.L} regions, mu_table has {params.n_regions}")

    trace = _encode(X, params)
    beta, kappa = trace.out.beta, trace.out.kappa
    std = np.exp(0.5 * kappa)
    z = beta + std * eps
    xhat, dec_caches = mlp_forward(params.decoder_layers(), z)
    eta, pred_caches = mlp_forward(params.predictor_layers(), z)

    p = gc.clamp_probability(ndtr(eta))
    alpha = params.alpha
    lik = gc.joint_log_likelihood(Y[:, 0], Y[:, 1], p[:, 0], p[:, 1], alpha)
    resid = X - xhat
    ll_x = -0.5 * np.sum(resid ** 2, axis=1) - 0.5 * cfg.p * LOG_2PI

    mu_rows, direct = region_mu_rows(params, batch.region, graph)
    s2 = cfg.prior_z_variance
    diff = beta - mu_rows
    kl = kl_z(trace.out, mu_rows, s2)

    tau = params.tau
    penalty = mu_prior_penalty(params.mu_table, graph, tau)

    breakdown = ElboBreakdown(
        recon_y=float(lik.log_lik.sum()),
        recon_x=float(ll_x.sum()),
        kl_z=float(kl.sum()),
        kl_mu=penalty,
    )
    for name, value in vars(breakdown).items():
        _check_finite(name, value)
    lam = params.recon_weight
    loss = -(data_scale * (breakdown.recon_y + lam * breakdown.recon_x - breakdown.kl_z) - penalty)
    _check_finite("loss", loss)
    result = ElboResult(loss=loss, breakdown=breakdown)
    if not need_grad:
        return result, None

    g = data_scale
    grads: dict[str, np.ndarray] = {}

    # outcome head
    slope = probit_slope(eta)
    g_eta = -g * np.stack([lik.d_p1, lik.d_p2], axis=1) * slope
    pred_grads, gz_pred = mlp_backward(pred_caches, g_eta)
    _store_chain(grads, "predictor", pred_grads)

    # reconstruction
    g_xhat = -g * lam * resid
    dec_grads, gz_dec = mlp_backward(dec_caches, g_xhat)
    _store_chain(grads, "decoder", dec_grads)

    # reparameterization and KL(q(z|x) || p(z|mu))
    gz = gz_pred + gz_dec
    g_beta = gz + g * diff / s2
    g_kappa = gz * 0.5 * std * eps + g * 0.5 * (np.exp(kappa) / s2 - 1.0)

    mu_grads, g_h_mu = dense_backward(trace.mu_head, g_beta)
    lv_grads, g_h_lv = dense_backward(trace.logvar_head, g_kappa)
    grads["encoder.mu.weight"], grads["encoder.mu.bias"] = mu_grads.weights, mu_grads.biases
    grads["encoder.logvar.weight"], grads["encoder.logvar.bias"] = lv_grads.weights, lv_grads.biases
    enc_grads, _ = mlp_backward(trace.chain, g_h_mu + g_h_lv)
    _store_chain(grads, "encoder", enc_grads)

    # region means: KL pull toward beta plus the GMRF penalty
    g_table = tau * precision_matvec(params.mu_table, graph)
    regions = np.asarray(batch.region, dtype=np.int64)
    np.add.at(g_table, regions[direct], (-g * diff / s2)[direct])
    grads["mu_table"] = g_table

    lo, hi = math.log(cfg.tau_min), math.log(cfg.tau_max)
    quad = np.asarray(quadratic_form(params.mu_table, graph))
    raw_tau = float(params.tensors["raw_tau"])
    tau_slope = tau if lo <= raw_tau <= hi else 0.0
    grads["raw_tau"] = np.array((0.5 * quad.sum() - 0.5 * cfg.d * graph.L / tau) * tau_slope)

    if cfg.copula:
        d_alpha = gc.alpha_raw_derivative(float(params.tensors["raw_alpha"]))
        grads["raw_alpha"] = np.array(-g * float(lik.d_alpha.sum()) * d_alpha)
    return result, grads


def _store_chain(grads: dict[str, np.ndarray], prefix: str, chain_grads):
    for i, layer_grads in enumerate(chain_grads):
        grads[f"{prefix}.{i}.weight"] = layer_grads.weights
        grads[f"{prefix}.{i}.bias"] = layer_grads.biases


def elbo_batch(batch: Batch, params: ModelParams, graph: SpatialGraph, eps: np.ndarray,
               data_scale: float = 1.0) -> ElboResult:
    """Negated weighted ELBO of one batch with one eps draw per observation.

    ``data_scale`` multiplies the per-observation terms (n / batch size for
    an unbiased mini-batch estimate); the region-mean penalty enters once.
    """
    result, _ = _evaluate(batch, params, graph, eps, data_scale, need_grad=False)
    return result


def elbo_gradient(batch: Batch, params: ModelParams, graph: SpatialGraph, eps: np.ndarray,
                  data_scale: float = 1.0) -> tuple[ElboResult, dict[str, np.ndarray]]:
    """``elbo_batch`` plus the gradient of the loss for every trainable tensor."""
    return _evaluate(batch, params, graph, eps, data_scale, need_grad=True)
