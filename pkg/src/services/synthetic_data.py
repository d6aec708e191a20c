"""Synthetic spatial data with Gumbel-coupled binary outcomes, for benchmarks and oracles."""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import expit

from src.services import gumbel_copula as gc
from src.services.data_sources import DatasetSource, read_adjacency
from src.services.dataset import Dataset
from src.services.spatial_graph import (
    SpatialGraph,
    build_precision,
    gmrf_sample,
    random_geometric_graph,
    square_grid,
)
from src.utils.seeding import child, stream

logger = logging.getLogger(__name__)

GRAPH_KINDS = ("grid", "geometric")


class SimConfig(BaseModel):
    """Generator settings. ``graph`` is ``grid``, ``geometric`` or an edge-list path."""

    model_config = ConfigDict(extra="forbid")

    n: int = Field(ge=1)
    n_regions: int = Field(default=25, ge=2)
    d: int = Field(default=3, ge=1)
    p: int = Field(default=10, ge=1)
    rho: float = Field(default=0.9, ge=0.0, lt=1.0)
    alpha_true: float = Field(default=2.0, ge=1.0)
    sigma2_z: float = Field(default=1.0, gt=0.0)
    sigma2_x: float = Field(default=1.0, ge=0.0)
    noise_sigma2: float = Field(default=0.0, ge=0.0)
    tau_true: float = Field(default=1.0, gt=0.0)
    seed: int = Field(default=0, ge=0)
    graph: str = "grid"

    @model_validator(mode="after")
    def _check_sizes(self):
        if self.n < self.n_regions:
            raise ValueError(f"n ({self.n}) must be at least the number of regions ({self.n_regions})")
        return self


@dataclass(eq=False)
class GroundTruth:
    """Everything the generator drew, kept for oracles."""

    graph: SpatialGraph
    mu: np.ndarray
    z: np.ndarray
    eta: np.ndarray
    pi: np.ndarray
    u: np.ndarray
    alpha: float
    coefficients: dict[str, np.ndarray]
    coords: np.ndarray | None = field(default=None, repr=False)

    def to_frame(self, obs_id: np.ndarray, region: np.ndarray) -> pd.DataFrame:
        frame = pd.DataFrame({"obs_id": obs_id, "region": region})
        for k in range(self.z.shape[1]):
            frame[f"z_{k + 1}"] = self.z[:, k]
        frame["pi1"], frame["pi2"] = self.pi[:, 0], self.pi[:, 1]
        frame["eta1"], frame["eta2"] = self.eta[:, 0], self.eta[:, 1]
        return frame

    def coefficients_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            **{name: values.tolist() for name, values in self.coefficients.items()},
        }


@dataclass
class InjectedEffect:
    dataset: Dataset
    truth: GroundTruth
    column: str
    delta: float
    true_ace: dict[str, float]


def build_graph(config: SimConfig) -> tuple[SpatialGraph, np.ndarray | None]:
    if config.graph == "grid":
        return square_grid(config.n_regions, config.rho), None
    if config.graph == "geometric":
        return random_geometric_graph(config.n_regions, child(config.seed, "sim", 1), rho=config.rho)
    graph = read_adjacency(Path(config.graph), rho=config.rho)
    if graph.L != config.n_regions:
        logger.info(f"Edge list defines {graph.L} regions; overriding n_regions={config.n_regions}")
    return graph, None


def assign_regions(n: int, n_regions: int, rng: np.random.Generator) -> np.ndarray:
    """Balanced random assignment: every region gets floor or ceil of n / L rows."""
    return rng.permutation(np.resize(np.arange(n_regions), n))


def generate(config: SimConfig, graph: SpatialGraph | None = None) -> tuple[Dataset, GroundTruth]:
    """Draw one synthetic dataset.

    Region means come from the CAR prior, latents are chained across
    dimensions, covariates are a noisy linear map of the latents, and
    outcomes threshold Gumbel-coupled uniforms at logistic probabilities.
    """
    coords = None
    if graph is None:
        graph, coords = build_graph(config)
    rng = stream(config.seed, "sim")
    L, d, p, n = graph.L, config.d, config.p, config.n

    factor = build_precision(graph)
    mu = gmrf_sample(factor, config.tau_true, rng, size=d)
    region = assign_regions(n, L, rng)

    z = mu[region] + np.sqrt(config.sigma2_z) * rng.standard_normal((n, d))
    z = np.cumsum(z, axis=1)

    loading = rng.standard_normal((p, d))
    X = z @ loading.T + np.sqrt(config.sigma2_x) * rng.standard_normal((n, p))

    beta11 = rng.standard_normal(d)
    beta12 = rng.standard_normal(d)
    beta2 = rng.standard_normal(d)
    eta = np.column_stack([z @ beta11 + np.sin(z) @ beta12, z @ beta2])
    pi = expit(eta)

    u1, u2 = gc.sample_pairs(config.alpha_true, n, rng)
    u = np.column_stack([u1, u2])
    Y = (u <= pi).astype(np.int64)

    if config.noise_sigma2 > 0:
        X = perturb_covariates(X, config.noise_sigma2, rng)

    data = Dataset(
        X=X,
        Y=Y,
        region=region,
        feature_names=[f"x{i + 1}" for i in range(p)],
    )
    truth = GroundTruth(
        graph=graph,
        mu=mu,
        z=z,
        eta=eta,
        pi=pi,
        u=u,
        alpha=config.alpha_true,
        coefficients={"loading": loading, "beta11": beta11, "beta12": beta12, "beta2": beta2},
        coords=coords,
    )
    logger.info(
        f"Generated n={n}, L={L}, d={d}, p={p}, alpha={config.alpha_true}: "
        f"mean y1={Y[:, 0].mean():.3f}, mean y2={Y[:, 1].mean():.3f}"
    )
    return data, truth


def perturb_covariates(X: np.ndarray, noise_sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """H = X + N(0, noise_sigma2) elementwise."""
    if noise_sigma2 <= 0:
        return np.asarray(X, dtype=float).copy()
    return X + np.sqrt(noise_sigma2) * rng.standard_normal(np.shape(X))


def true_pattern_shift(eta: np.ndarray, delta: float, alpha: float) -> dict[str, float]:
    """Exact mean change of each joint cell when both scores move by ``delta``."""
    base = gc.cell_probs(expit(eta[:, 0]), expit(eta[:, 1]), alpha).stack()
    shifted = gc.cell_probs(expit(eta[:, 0] + delta), expit(eta[:, 1] + delta), alpha).stack()
    diff = (shifted - base).mean(axis=1)
    return {f"{y1}{y2}": float(diff[k]) for k, (y1, y2) in enumerate(gc.PATTERNS)}


def inject_known_effect(data: Dataset, truth: GroundTruth, delta: float, rng: np.random.Generator,
                        name: str = "injected") -> InjectedEffect:
    """Append a Bernoulli(0.5) column B and regenerate outcomes with eta + delta * B.

    The stored uniforms are reused, so ``delta = 0`` leaves every outcome
    unchanged. ``true_ace`` is the exact effect of setting B from 0 to 1.
    """
    b = rng.binomial(1, 0.5, size=data.n).astype(float)
    eta = truth.eta + delta * b[:, None]
    pi = expit(eta)
    Y = (truth.u <= pi).astype(np.int64)
    augmented = data.with_column(name, b).with_outcomes(Y)
    new_truth = replace(truth, eta=eta, pi=pi)
    true_ace = true_pattern_shift(truth.eta, delta, truth.alpha)
    logger.info(f"Injected column {name} with delta={delta}: true ACE(1,1)={true_ace['11']:.4f}")
    return InjectedEffect(dataset=augmented, truth=new_truth, column=name, delta=delta, true_ace=true_ace)


class SimulatedDatasetSource(DatasetSource):
    """Freshly generated synthetic data; keeps the ground truth of the last draw."""

    def __init__(self, config: SimConfig):
        self.config = config
        self.truth: GroundTruth | None = None

    def fetch(self) -> Dataset:
        data, self.truth = generate(self.config)
        return data

    @property
    def inputs(self) -> list[Path]:
        return [Path(self.config.graph)] if self.config.graph not in GRAPH_KINDS else []
