"""Benchmark grid: simulate, split, fit every variant, score AUC on the test split."""

import itertools
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Annotated, Any

import pandas as pd
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field

from src.services.baselines import DEFAULT_VARIANTS, Variant, fit_variant
from src.services.metrics import auc
from src.services.scvae_model import ModelConfig
from src.services.synthetic_data import SimConfig, generate
from src.services.trainer import TrainConfig, split
from src.utils.config_file import FloatList, IntList, build_model, split_commas

logger = logging.getLogger(__name__)

RESULT_COLUMNS = [
    "cell_id", "variant", "seed", "auc_y1", "auc_y2", "alpha_hat", "tau_hat", "seconds",
    "n", "recon_weight", "alpha_true", "noise_sigma2", "status",
]

VariantList = Annotated[list[Variant], BeforeValidator(split_commas)]


class AblationGrid(BaseModel):
    """Values swept by the benchmark; the cells are their Cartesian product."""

    model_config = ConfigDict(extra="forbid")

    n: IntList = Field(default_factory=lambda: [1000])
    recon_weight: FloatList = Field(default_factory=lambda: [1.0])
    alpha_true: FloatList = Field(default_factory=lambda: [2.0])
    noise_sigma2: FloatList = Field(default_factory=lambda: [0.0])
    seeds: IntList = Field(default_factory=lambda: [0, 1, 2])
    variants: VariantList = Field(default_factory=lambda: list(DEFAULT_VARIANTS))
    samples: int = Field(default=200, ge=1)


@dataclass
class AblationJob:
    cell_id: str
    seed: int
    recon_weight: float
    sim: SimConfig
    model: ModelConfig
    train: TrainConfig
    variants: list[Variant]
    samples: int


def expand_jobs(grid: AblationGrid, sim_base: dict[str, Any], model_config: ModelConfig,
                train_config: TrainConfig, line_of: dict[str, int] | None = None) -> list[AblationJob]:
    """One job per (cell, seed), in grid order. Simulation settings are validated up front."""
    jobs = []
    cells = itertools.product(grid.n, grid.recon_weight, grid.alpha_true, grid.noise_sigma2)
    for index, (n, lam, alpha, noise) in enumerate(cells, start=1):
        for seed in grid.seeds:
            values = {**sim_base, "n": n, "alpha_true": alpha, "noise_sigma2": noise, "seed": seed}
            jobs.append(AblationJob(
                cell_id=f"C{index:03d}",
                seed=seed,
                recon_weight=lam,
                sim=build_model(SimConfig, values, line_of, prefix="sim."),
                model=model_config,
                train=train_config.model_copy(update={"seed": seed, "recon_weight": lam}),
                variants=list(grid.variants),
                samples=grid.samples,
            ))
    return jobs


def _row(job: AblationJob, variant: Variant, **values) -> dict[str, Any]:
    row = {
        "cell_id": job.cell_id,
        "variant": variant.value,
        "seed": job.seed,
        "auc_y1": math.nan,
        "auc_y2": math.nan,
        "alpha_hat": math.nan,
        "tau_hat": math.nan,
        "seconds": math.nan,
        "n": job.sim.n,
        "recon_weight": job.recon_weight,
        "alpha_true": job.sim.alpha_true,
        "noise_sigma2": job.sim.noise_sigma2,
        "status": "ok",
    }
    row.update(values)
    return row


def run_job(job: AblationJob) -> list[dict[str, Any]]:
    """Fit every variant of one (cell, seed); failures become rows with a failed status."""
    try:
        data, truth = generate(job.sim)
        train, test = split(data, job.train.train_fraction, job.seed, job.train.holdout_regions)
    except Exception as e:
        logger.exception(f"Cell {job.cell_id} seed {job.seed}: data preparation failed")
        return [_row(job, v, status=f"failed: {e}") for v in job.variants]

    rows = []
    for variant in job.variants:
        start = time.perf_counter()
        try:
            fitted = fit_variant(variant, train, truth.graph, job.model, job.train, job.samples)
            probs = fitted.predict_marginals(test)
            seconds = max(time.perf_counter() - start, 1e-9)
            rows.append(_row(
                job, variant,
                auc_y1=auc(probs[:, 0], test.Y[:, 0]),
                auc_y2=auc(probs[:, 1], test.Y[:, 1]),
                alpha_hat=fitted.alpha_hat,
                tau_hat=fitted.tau_hat,
                seconds=seconds,
            ))
            logger.info(
                f"{job.cell_id} seed={job.seed} {variant.value}: "
                f"auc=({rows[-1]['auc_y1']:.4f}, {rows[-1]['auc_y2']:.4f}) in {seconds:.2f}s"
            )
        except Exception as e:
            logger.exception(f"{job.cell_id} seed={job.seed} {variant.value} failed")
            rows.append(_row(job, variant, seconds=max(time.perf_counter() - start, 1e-9),
                             status=f"failed: {e}"))
    return rows


def run_ablation(grid: AblationGrid, sim_base: dict[str, Any] | None = None,
                 model_config: ModelConfig | None = None, train_config: TrainConfig | None = None,
                 jobs: int = 1, line_of: dict[str, int] | None = None) -> pd.DataFrame:
    """Run the whole grid and return one row per (cell, variant, seed) in grid order."""
    planned = expand_jobs(grid, sim_base or {}, model_config or ModelConfig(), train_config or TrainConfig(),
                          line_of)
    if not planned:
        logger.info("Empty benchmark grid")
        return pd.DataFrame(columns=RESULT_COLUMNS)

    logger.info(f"Running {len(planned)} benchmark jobs with {jobs} worker(s)")
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            batches = list(pool.map(run_job, planned))
    else:
        batches = [run_job(job) for job in planned]

    results = pd.DataFrame([row for batch in batches for row in batch], columns=RESULT_COLUMNS)
    failed = int((results["status"] != "ok").sum())
    if failed:
        logger.warning(f"{failed} of {len(results)} benchmark rows failed")
    return results
