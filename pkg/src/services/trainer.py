"""Splitting, standardization and the mini-batch Adam loop with early stopping."""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from src.errors import Diverged, InvalidParameter, NonFiniteLoss, TooFewRegions
from src.services.dataset import Dataset, Standardization
from src.services.grad_engine import AdamState, adam_update
from src.services.scvae_model import (
    Batch,
    ModelConfig,
    ModelParams,
    elbo_batch,
    elbo_gradient,
    init_params,
)
from src.services.spatial_graph import SpatialGraph
from src.utils.seeding import stream

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ["epoch", "loss", "recon_y", "recon_x", "kl_z", "kl_mu", "tau", "alpha", "val_loss"]


class TrainConfig(BaseModel):
    """Optimizer and stopping settings."""

    model_config = ConfigDict(extra="forbid")

    batch_size: int = Field(default=256, ge=1)
    max_epochs: int = Field(default=300, ge=0)
    patience: int = Field(default=20, ge=1)
    validation_fraction: float = Field(default=0.1, ge=0.0, lt=1.0)
    learning_rate: float = Field(default=1e-3, gt=0.0)
    seed: int = Field(default=0, ge=0)
    recon_weight: float | None = Field(default=None, ge=0.0)
    train_fraction: float = Field(default=0.8, gt=0.0, lt=1.0)
    holdout_regions: int | None = Field(default=None, ge=0)
    divergence_factor: float = Field(default=10.0, gt=1.0)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    recon_y: float
    recon_x: float
    kl_z: float
    kl_mu: float
    tau: float
    alpha: float
    val_loss: float


@dataclass
class FitResult:
    params: object
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0
    best_val_loss: float = math.nan

    def history_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.history], columns=HISTORY_COLUMNS)


def split(data: Dataset, train_fraction: float = 0.8, seed: int = 0,
          holdout_regions: int | None = None) -> tuple[Dataset, Dataset]:
    """Random observation split plus whole held-out regions, standardized on train.

    ``holdout_regions`` defaults to 5% of the regions present (at least one).
    """
    if data.n < 10:
        raise InvalidParameter(f"Need at least 10 observations to split, got {data.n}")
    if not 0.0 < train_fraction < 1.0:
        raise InvalidParameter(f"train_fraction must lie in (0, 1), got {train_fraction}")

    present = np.unique(data.region)
    k = max(1, round(0.05 * present.size)) if holdout_regions is None else holdout_regions
    if k >= present.size:
        raise TooFewRegions(f"Cannot hold out {k} of {present.size} regions")
    held = stream(seed, "holdout").choice(present, size=k, replace=False) if k else np.array([], dtype=np.int64)
    in_held = np.isin(data.region, held)

    perm = stream(seed, "split").permutation(data.n)
    n_train = int(round(train_fraction * data.n))
    train_idx = np.sort(perm[:n_train][~in_held[perm[:n_train]]])
    test_idx = np.sort(np.concatenate([perm[n_train:], perm[:n_train][in_held[perm[:n_train]]]]))

    raw = data if data.standardization is None else data.standardized(Standardization.identity(data.p))
    train = raw.subset(train_idx)
    test = raw.subset(test_idx)
    stats = Standardization.fit(train.raw_X)
    logger.info(f"Split {data.n} rows: train={train.n}, test={test.n}, held-out regions={sorted(held.tolist())}")
    return train.standardized(stats), test.standardized(stats)


class Objective(ABC):
    """What the optimizer loop needs from a model."""

    @abstractmethod
    def trainable(self) -> dict[str, np.ndarray]:
        """Named arrays updated in place by Adam."""

    @abstractmethod
    def step(self, idx: np.ndarray, rng: np.random.Generator) -> tuple[float, dict[str, float], dict[str, np.ndarray]]:
        """Per-observation loss, its named parts and gradients for rows ``idx``."""

    @abstractmethod
    def validation_loss(self) -> float:
        pass

    @abstractmethod
    def summary(self) -> dict[str, float]:
        """Scalar parameters to record each epoch."""

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in self.trainable().items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for name, arr in self.trainable().items():
            arr[...] = snap[name]


def optimize(objective: Objective, n_fit: int, config: TrainConfig) -> tuple[list[EpochRecord], int, int, float]:
    """Shuffled mini-batch Adam with patience-based early stopping.

    Keeps the parameters of the best validation epoch (epoch 0 = initial
    values). Returns (history, best_epoch, stopped_epoch, best_val_loss).
    """
    history: list[EpochRecord] = []
    initial = objective.validation_loss()
    if not math.isfinite(initial):
        raise NonFiniteLoss("validation")
    if config.max_epochs == 0:
        return history, 0, 0, initial

    shuffle_rng = stream(config.seed, "shuffle")
    eps_rng = stream(config.seed, "eps")
    state = AdamState(lr=config.learning_rate)
    best, best_epoch, bad_epochs = initial, 0, 0
    best_snap = objective.snapshot()
    epoch = 0

    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(n_fit)
        totals: dict[str, float] = {}
        steps = 0
        for start in range(0, n_fit, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, parts, grads = objective.step(idx, eps_rng)
            adam_update(objective.trainable(), grads, state)
            totals["loss"] = totals.get("loss", 0.0) + loss
            for key, value in parts.items():
                totals[key] = totals.get(key, 0.0) + value
            steps += 1

        val = objective.validation_loss()
        if not math.isfinite(val):
            raise NonFiniteLoss("validation")
        means = {key: value / steps for key, value in totals.items()}
        history.append(EpochRecord(
            epoch=epoch,
            loss=means["loss"],
            recon_y=means.get("recon_y", math.nan),
            recon_x=means.get("recon_x", math.nan),
            kl_z=means.get("kl_z", math.nan),
            kl_mu=means.get("kl_mu", math.nan),
            val_loss=val,
            **objective.summary(),
        ))
        logger.debug(f"epoch {epoch}: loss={means['loss']:.5f} val={val:.5f}")

        if initial > 0 and val > config.divergence_factor * initial:
            raise Diverged(f"Validation loss {val:.4g} exceeds {config.divergence_factor}x the initial {initial:.4g}")
        if val < best:
            best, best_epoch, bad_epochs = val, epoch, 0
            best_snap = objective.snapshot()
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                logger.info(f"Early stop at epoch {epoch}, best epoch {best_epoch} (val={best:.5f})")
                break

    objective.restore(best_snap)
    return history, best_epoch, epoch, best


def validation_split(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices (fit, validation) inside the training set; tiny sets validate on themselves."""
    n_val = int(round(fraction * n))
    if n_val == 0 or n_val >= n:
        idx = np.arange(n)
        return idx, idx
    perm = stream(seed, "validation").permutation(n)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


class VaeObjective(Objective):
    """Per-observation negated ELBO of the copula VAE."""

    def __init__(self, params: ModelParams, graph: SpatialGraph, fit: Dataset, val: Dataset, seed: int):
        self.params = params
        self.graph = graph
        self.fit = fit
        self.val = val
        self.n_fit = fit.n
        self._names = params.trainable_names()
        self._val_batch = Batch(val.X, val.Y, val.region)
        self._val_eps = stream(seed, "val_eps").standard_normal((val.n, params.config.d))

    def trainable(self) -> dict[str, np.ndarray]:
        return {name: self.params.tensors[name] for name in self._names}

    def step(self, idx, rng):
        batch = Batch(self.fit.X[idx], self.fit.Y[idx], self.fit.region[idx])
        eps = rng.standard_normal((len(idx), self.params.config.d))
        result, grads = elbo_gradient(batch, self.params, self.graph, eps, data_scale=self.n_fit / len(idx))
        scale = 1.0 / self.n_fit
        b = result.breakdown
        parts = {
            "recon_y": b.recon_y / len(idx),
            "recon_x": b.recon_x / len(idx),
            "kl_z": b.kl_z / len(idx),
            "kl_mu": b.kl_mu * scale,
        }
        return result.loss * scale, parts, {name: grads[name] * scale for name in self._names}

    def validation_loss(self) -> float:
        result = elbo_batch(self._val_batch, self.params, self.graph, self._val_eps,
                            data_scale=self.n_fit / self.val.n)
        return result.loss / self.n_fit

    def summary(self) -> dict[str, float]:
        return {"tau": self.params.tau, "alpha": self.params.alpha}


def fit(train: Dataset, graph: SpatialGraph, model_config: ModelConfig, train_config: TrainConfig) -> FitResult:
    """Train the copula VAE on standardized ``train`` and keep the best-validation parameters."""
    if train.standardization is None:
        train = train.standardized(Standardization.fit(train.X))
    config = model_config.model_copy(update={"p": train.p, "rho": graph.rho})
    params = init_params(config, graph.L, stream(train_config.seed, "init"),
                         feature_names=train.feature_names, seed=train_config.seed)
    if train_config.recon_weight is not None:
        params.recon_weight = train_config.recon_weight
    params.x_mean = train.standardization.mean.copy()
    params.x_scale = train.standardization.scale.copy()
    seen = np.zeros(graph.L, dtype=bool)
    seen[np.unique(train.region)] = True
    params.seen_regions = seen

    fit_idx, val_idx = validation_split(train.n, train_config.validation_fraction, train_config.seed)
    objective = VaeObjective(params, graph, train.subset(fit_idx), train.subset(val_idx), train_config.seed)
    logger.info(
        f"Fitting copula VAE: n={len(fit_idx)}, val={len(val_idx)}, p={train.p}, d={config.d}, "
        f"L={graph.L}, lambda={params.recon_weight}, copula={config.copula}"
    )
    history, best_epoch, stopped, best_val = optimize(objective, len(fit_idx), train_config)
    logger.info(f"Fit done: tau={params.tau:.4f}, alpha={params.alpha:.4f}, best val={best_val:.5f}")
    return FitResult(params=params, history=history, best_epoch=best_epoch,
                     stopped_epoch=stopped, best_val_loss=best_val)
