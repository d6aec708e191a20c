"""Comparison models for the benchmark: logistic regression, an independent probit network,
and the VAE variants, all behind one ``fit_variant`` entry point."""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import linalg
from scipy.special import expit, logit, ndtr

from src.errors import DimensionMismatch
from src.services import gumbel_copula as gc
from src.services import trainer
from src.services.dataset import Dataset, Standardization
from src.services.grad_engine import DenseLayer, init_layer, mlp_backward, mlp_forward
from src.services.inference import predict_dataset
from src.services.scvae_model import ModelConfig, ModelParams, probit_slope
from src.services.spatial_graph import SpatialGraph
from src.utils.seeding import stream

logger = logging.getLogger(__name__)

MAX_HALVINGS = 30


class Variant(str, Enum):
    """Benchmark model variants."""
    LOGISTIC = "logistic"
    INDEPENDENT_NN = "independent_nn"
    VAE_NO_COPULA = "vae_no_copula"
    VAE_COPULA = "vae_copula"
    COPULA_SHALLOW = "copula_shallow"


DEFAULT_VARIANTS = [Variant.LOGISTIC, Variant.INDEPENDENT_NN, Variant.VAE_NO_COPULA, Variant.VAE_COPULA]


class LogisticConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    max_iter: int = Field(default=500, ge=1)
    tol: float = Field(default=1e-6, gt=0.0)
    separation_threshold: float = Field(default=1e3, gt=0.0)


@dataclass
class LogisticFit:
    """Intercept and slopes of one outcome's logistic regression."""
    coef: np.ndarray
    intercept: float
    separated: bool = False
    converged: bool = False
    iterations: int = 0

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return expit(np.asarray(X, dtype=float) @ self.coef + self.intercept)


def _log_likelihood(A: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    eta = A @ w
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def fit_logistic(train: Dataset, outcome: int, config: LogisticConfig | None = None) -> LogisticFit:
    """Newton-Raphson with step halving on the Bernoulli-logit log-likelihood.

    Stops when the gradient max-norm drops below ``tol``. Coefficients
    growing past ``separation_threshold``, a perfect fit, or a single-class
    outcome mark the fit as separated instead of raising.
    """
    config = config or LogisticConfig()
    X = np.asarray(train.X, dtype=float)
    y = train.Y[:, outcome].astype(float)
    n, p = X.shape

    if y.min() == y.max():
        logger.warning(f"Outcome {outcome + 1} has a single class; no logistic MLE exists")
        rate = gc.clamp_probability(y.mean())
        return LogisticFit(coef=np.zeros(p), intercept=float(logit(rate)), separated=True)

    A = np.column_stack([np.ones(n), X])
    w = np.zeros(p + 1)
    ll = _log_likelihood(A, y, w)
    converged = separated = False
    iteration = 0
    for iteration in range(1, config.max_iter + 1):
        prob = expit(A @ w)
        grad = A.T @ (y - prob)
        if np.max(np.abs(grad)) < config.tol:
            converged = True
            break
        hess = (A * (prob * (1.0 - prob))[:, None]).T @ A
        try:
            step = linalg.solve(hess, grad, assume_a="pos")
        except linalg.LinAlgError:
            step = linalg.lstsq(hess, grad)[0]

        t = 1.0
        for _ in range(MAX_HALVINGS):
            candidate = w + t * step
            ll_candidate = _log_likelihood(A, y, candidate)
            if ll_candidate >= ll:
                break
            t *= 0.5
        else:
            # no ascent left at working precision
            converged = True
            break
        w, ll = candidate, ll_candidate

        if np.max(np.abs(w)) > config.separation_threshold or ll > -1e-9:
            separated = True
            break

    if separated:
        logger.warning(f"Outcome {outcome + 1}: perfect separation detected after {iteration} iterations")
    elif not converged:
        logger.warning(f"Outcome {outcome + 1}: logistic fit stopped at max_iter={config.max_iter}")
    return LogisticFit(coef=w[1:], intercept=float(w[0]), separated=separated,
                       converged=converged, iterations=iteration)


# Independent probit network

@dataclass
class IndependentNet:
    """Predictor-shaped network applied directly to standardized x."""

    tensors: dict[str, np.ndarray]
    x_mean: np.ndarray
    x_scale: np.ndarray
    feature_names: list[str] = field(default_factory=list)

    def layers(self) -> list[DenseLayer]:
        layers = []
        i = 0
        while f"net.{i}.weight" in self.tensors:
            layers.append(DenseLayer(self.tensors[f"net.{i}.weight"], self.tensors[f"net.{i}.bias"]))
            i += 1
        return layers

    def scores(self, X_std: np.ndarray) -> np.ndarray:
        X_std = np.asarray(X_std, dtype=float)
        if X_std.shape[-1] != self.x_mean.size:
            raise DimensionMismatch(f"Network expects {self.x_mean.size} covariates, got {X_std.shape[-1]}")
        eta, _ = mlp_forward(self.layers(), X_std)
        return eta

    def predict_marginals(self, data: Dataset) -> np.ndarray:
        X_std = (data.raw_X - self.x_mean) / self.x_scale
        return gc.clamp_probability(ndtr(self.scores(X_std)))


def init_independent_net(p: int, hidden: list[int], rng: np.random.Generator,
                         stats: Standardization, feature_names: list[str]) -> IndependentNet:
    tensors = {}
    dims = [p, *hidden, 2]
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        layer = init_layer(a, b, rng)
        tensors[f"net.{i}.weight"] = layer.weights
        tensors[f"net.{i}.bias"] = layer.biases
    return IndependentNet(tensors, stats.mean.copy(), stats.scale.copy(), list(feature_names))


def _probit_nll(net: IndependentNet, X: np.ndarray, Y: np.ndarray, need_grad: bool):
    eta, caches = mlp_forward(net.layers(), X)
    p = gc.clamp_probability(ndtr(eta))
    ll = np.sum(Y * np.log(p) + (1 - Y) * np.log(1.0 - p))
    loss = -float(ll) / len(X)
    if not need_grad:
        return loss, None
    g_eta = -(Y / p - (1 - Y) / (1.0 - p)) * probit_slope(eta) / len(X)
    layer_grads, _ = mlp_backward(caches, g_eta)
    grads = {}
    for i, lg in enumerate(layer_grads):
        grads[f"net.{i}.weight"] = lg.weights
        grads[f"net.{i}.bias"] = lg.biases
    return loss, grads


class IndependentNetObjective(trainer.Objective):
    """Mean independent Bernoulli-probit negative log-likelihood."""

    def __init__(self, net: IndependentNet, fit: Dataset, val: Dataset):
        self.net = net
        self.fit = fit
        self.val = val

    def trainable(self):
        return self.net.tensors

    def step(self, idx, rng):
        loss, grads = _probit_nll(self.net, self.fit.X[idx], self.fit.Y[idx].astype(float), need_grad=True)
        return loss, {"recon_y": -loss}, grads

    def validation_loss(self):
        loss, _ = _probit_nll(self.net, self.val.X, self.val.Y.astype(float), need_grad=False)
        return loss

    def summary(self):
        return {"tau": math.nan, "alpha": 1.0}


def fit_independent_nn(train: Dataset, model_config: ModelConfig,
                       train_config: trainer.TrainConfig) -> trainer.FitResult:
    """Train the two-output probit network with the same loop as the VAE."""
    if train.standardization is None:
        train = train.standardized(Standardization.fit(train.X))
    net = init_independent_net(train.p, model_config.predictor_hidden, stream(train_config.seed, "init"),
                               train.standardization, train.feature_names)
    fit_idx, val_idx = trainer.validation_split(train.n, train_config.validation_fraction, train_config.seed)
    objective = IndependentNetObjective(net, train.subset(fit_idx), train.subset(val_idx))
    logger.info(f"Fitting independent probit network: n={len(fit_idx)}, hidden={model_config.predictor_hidden}")
    history, best_epoch, stopped, best_val = trainer.optimize(objective, len(fit_idx), train_config)
    return trainer.FitResult(params=net, history=history, best_epoch=best_epoch,
                             stopped_epoch=stopped, best_val_loss=best_val)


# Uniform interface over the variants

class FittedVariant(ABC):
    """A fitted benchmark model."""

    variant: Variant

    @abstractmethod
    def predict_marginals(self, data: Dataset) -> np.ndarray:
        """P(Y1=1), P(Y2=1) per row, shape (n, 2); ``data`` in raw units."""

    @property
    def alpha_hat(self) -> float:
        return math.nan

    @property
    def tau_hat(self) -> float:
        return math.nan


@dataclass
class LogisticVariant(FittedVariant):
    fits: list[LogisticFit]
    stats: Standardization
    variant: Variant = Variant.LOGISTIC

    def predict_marginals(self, data):
        X_std = self.stats.apply(data.raw_X)
        return np.column_stack([fit.predict_proba(X_std) for fit in self.fits])


@dataclass
class NetVariant(FittedVariant):
    net: IndependentNet
    variant: Variant = Variant.INDEPENDENT_NN

    def predict_marginals(self, data):
        return self.net.predict_marginals(data)


@dataclass
class VaeVariant(FittedVariant):
    params: ModelParams
    variant: Variant
    samples: int = 200
    seed: int = 0

    def predict_marginals(self, data):
        prediction = predict_dataset(data, self.params, self.samples, stream(self.seed, "predict"))
        return np.column_stack([prediction.p1, prediction.p2])

    @property
    def alpha_hat(self):
        return self.params.alpha if self.params.config.copula else math.nan

    @property
    def tau_hat(self):
        return self.params.tau


def variant_model_config(variant: Variant, base: ModelConfig) -> ModelConfig:
    """Model settings a VAE variant overrides."""
    if variant == Variant.VAE_NO_COPULA:
        return base.model_copy(update={"copula": False})
    if variant == Variant.COPULA_SHALLOW:
        return base.model_copy(update={"encoder_hidden": [], "copula": True})
    return base.model_copy(update={"copula": True})


def fit_variant(variant: Variant | str, train: Dataset, graph: SpatialGraph, model_config: ModelConfig,
                train_config: trainer.TrainConfig, samples: int = 200) -> FittedVariant:
    """Fit one benchmark variant on a standardized training set."""
    variant = Variant(variant)
    if train.standardization is None:
        train = train.standardized(Standardization.fit(train.X))
    if variant == Variant.LOGISTIC:
        return LogisticVariant(fits=[fit_logistic(train, k) for k in (0, 1)], stats=train.standardization)
    if variant == Variant.INDEPENDENT_NN:
        return NetVariant(net=fit_independent_nn(train, model_config, train_config).params)
    result = trainer.fit(train, graph, variant_model_config(variant, model_config), train_config)
    return VaeVariant(params=result.params, variant=variant, samples=samples, seed=train_config.seed)
