"""Posterior predictive probabilities, per-region tables and average covariate effects."""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import ndtr

from src.errors import DimensionMismatch, InvalidLevel, InvalidParameter, UnknownRegion
from src.services import gumbel_copula as gc
from src.services.dataset import Dataset
from src.services.grad_engine import mlp_forward
from src.services.scvae_model import ModelParams, encode
from src.utils.config_file import FloatList, StrList

logger = logging.getLogger(__name__)

DEFAULT_SAMPLES = 200
MIN_BOOTSTRAP = 100
# Draws evaluated together when averaging cells; bounds peak memory.
DRAW_CHUNK = 50

REGION_COLUMNS = [
    "region_id", "n_obs", "p11", "p10", "p01", "p00", "p1", "p2",
    "p1_given_2", "p2_given_1", "p1_given_not2", "p2_given_not1",
]
ACE_COLUMNS = ["covariate", "contrast", "pattern", "ace", "lo", "hi", "reject"]


@dataclass
class JointPrediction:
    """Monte Carlo averaged cells for a batch of observations.

    ``cell_se`` holds the Monte Carlo standard error of each averaged cell
    (rows in ``PATTERNS`` order).
    """

    cells: gc.CellProbs
    samples: int
    cell_se: np.ndarray | None = field(default=None, repr=False)

    @property
    def p1(self) -> np.ndarray:
        return self.cells.p1

    @property
    def p2(self) -> np.ndarray:
        return self.cells.p2

    @staticmethod
    def _ratio(num, den):
        return np.clip(num / den, 0.0, 1.0)

    @property
    def c1_given_2(self) -> np.ndarray:
        return self._ratio(self.cells.p11, self.p2)

    @property
    def c2_given_1(self) -> np.ndarray:
        return self._ratio(self.cells.p11, self.p1)

    @property
    def c1_given_not2(self) -> np.ndarray:
        return self._ratio(self.cells.p10, 1.0 - self.p2)

    @property
    def c2_given_not1(self) -> np.ndarray:
        return self._ratio(self.cells.p01, 1.0 - self.p1)

    def to_frame(self) -> pd.DataFrame:
        c = self.cells
        return pd.DataFrame({
            "p11": c.p11, "p10": c.p10, "p01": c.p01, "p00": c.p00,
            "p1": self.p1, "p2": self.p2,
            "p1_given_2": self.c1_given_2,
            "p2_given_1": self.c2_given_1,
            "p1_given_not2": self.c1_given_not2,
            "p2_given_not1": self.c2_given_not1,
            "cell_sum": c.p11 + c.p10 + c.p01 + c.p00,
        })


def _cells_per_draw(X_std: np.ndarray, params: ModelParams, eps: np.ndarray) -> np.ndarray:
    """Cells for every (draw, observation): shape (4, S, n)."""
    out = encode(X_std, params)
    z = out.beta[None, :, :] + np.exp(0.5 * out.kappa)[None, :, :] * eps[:, None, :]
    eta, _ = mlp_forward(params.predictor_layers(), z)
    p = gc.clamp_probability(ndtr(eta))
    return gc.cell_probs(p[..., 0], p[..., 1], params.alpha).stack()


def predict_joint(X_std: np.ndarray, params: ModelParams, samples: int = DEFAULT_SAMPLES,
                  rng: np.random.Generator | None = None, eps: np.ndarray | None = None) -> JointPrediction:
    """Average the copula cells over ``samples`` reparameterized draws of z.

    ``X_std`` is already standardized with the training statistics. One noise
    vector per draw is shared by all rows, so a row's prediction does not
    depend on which other rows are in the batch. Passing ``eps`` (S x d)
    fixes the draws.
    """
    X_std = np.atleast_2d(np.asarray(X_std, dtype=float))
    if X_std.shape[1] != params.config.p:
        raise DimensionMismatch(f"Model expects {params.config.p} covariates, got {X_std.shape[1]}")
    if eps is None:
        if samples < 1:
            raise InvalidParameter(f"samples must be at least 1, got {samples}")
        if rng is None:
            raise InvalidParameter("predict_joint needs either rng or eps")
        eps = rng.standard_normal((samples, params.config.d))
    eps = np.atleast_2d(np.asarray(eps, dtype=float))
    if eps.shape[1] != params.config.d:
        raise DimensionMismatch(f"eps must have {params.config.d} columns, got {eps.shape[1]}")

    S = eps.shape[0]
    total = np.zeros((4, X_std.shape[0]))
    total_sq = np.zeros_like(total)
    for start in range(0, S, DRAW_CHUNK):
        cells = _cells_per_draw(X_std, params, eps[start:start + DRAW_CHUNK])
        total += cells.sum(axis=1)
        total_sq += np.square(cells).sum(axis=1)
    mean = total / S
    if S > 1:
        var = np.maximum(total_sq / S - mean ** 2, 0.0) * S / (S - 1)
        se = np.sqrt(var / S)
    else:
        se = np.zeros_like(mean)
    return JointPrediction(cells=gc.CellProbs(*mean), samples=S, cell_se=se)


def predict_dataset(data: Dataset, params: ModelParams, samples: int = DEFAULT_SAMPLES,
                    rng: np.random.Generator | None = None, eps: np.ndarray | None = None) -> JointPrediction:
    """``predict_joint`` on a dataset in raw units, standardized with the model's statistics."""
    _check_regions(data, params)
    return predict_joint(params.standardize(data.raw_X), params, samples, rng, eps)


def _check_regions(data: Dataset, params: ModelParams):
    if data.n and (data.region.min() < 0 or data.region.max() >= params.n_regions):
        bad = data.region[(data.region < 0) | (data.region >= params.n_regions)][0]
        raise UnknownRegion(f"Region {bad} outside [0, {params.n_regions})")


def observation_table(data: Dataset, prediction: JointPrediction) -> pd.DataFrame:
    frame = prediction.to_frame()
    frame.insert(0, "region_id", data.region)
    frame.insert(0, "obs_id", data.obs_id)
    return frame


def region_table(data: Dataset, params: ModelParams, samples: int = DEFAULT_SAMPLES,
                 rng: np.random.Generator | None = None, eps: np.ndarray | None = None,
                 prediction: JointPrediction | None = None) -> tuple[pd.DataFrame, list[int]]:
    """Mean predicted cells, marginals and conditionals per region.

    Returns the table (one row per region present in ``data``) and the
    regions of the model's graph with no observations.
    """
    if prediction is None:
        prediction = predict_dataset(data, params, samples, rng, eps)
    else:
        _check_regions(data, params)
    frame = observation_table(data, prediction).drop(columns=["cell_sum"])
    # A fixed row order keeps the per-region sums independent of input order.
    order = np.lexsort((data.obs_id, data.region))
    frame = frame.iloc[order]
    grouped = frame.drop(columns=["obs_id"]).groupby("region_id", sort=True)
    table = grouped.mean()
    table.insert(0, "n_obs", grouped.size())
    table = table.reset_index()[REGION_COLUMNS]
    empty = sorted(set(range(params.n_regions)) - set(table["region_id"].tolist()))
    if empty:
        logger.info(f"{len(empty)} regions have no observations and are left out of the region table")
    return table, empty


# Average covariate effects

@dataclass
class AceEstimate:
    covariate: str
    contrast: str
    pattern: tuple[int, int]
    estimate: float
    lower: float
    upper: float
    reject_null: bool
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "covariate": self.covariate,
            "contrast": self.contrast,
            "pattern": f"{self.pattern[0]}{self.pattern[1]}",
            "ace": self.estimate,
            "lo": self.lower,
            "hi": self.upper,
            "reject": self.reject_null,
        }


def _parse_pattern(pattern) -> tuple[int, int]:
    if isinstance(pattern, str):
        pattern = tuple(int(ch) for ch in pattern.strip())
    y1, y2 = (int(v) for v in pattern)
    if (y1, y2) not in gc.PATTERNS:
        raise InvalidParameter(f"Outcome pattern must be one of {gc.PATTERNS}, got {pattern}")
    return y1, y2


def _intervened_cells(data: Dataset, params: ModelParams, column: int, value: float,
                      eps: np.ndarray) -> np.ndarray:
    """Per-observation cells (4 x n) with column ``column`` set to ``value`` (raw units)."""
    raw = data.raw_X.copy()
    raw[:, column] = value
    return predict_joint(params.standardize(raw), params, eps=eps).cells.stack()


def _interval(estimate: float, boot: np.ndarray) -> tuple[float, float]:
    lo, hi = np.percentile(boot, [2.5, 97.5])
    return min(float(lo), estimate), max(float(hi), estimate)


def _estimates(covariate: str, contrast: str, diff: np.ndarray, boot_idx: np.ndarray,
               patterns: list[tuple[int, int]], degenerate: bool) -> list[AceEstimate]:
    results = []
    for pattern in patterns:
        k = int(gc.pattern_index(*pattern))
        if degenerate:
            results.append(AceEstimate(covariate, contrast, pattern, 0.0, 0.0, 0.0, False, degenerate=True))
            continue
        per_obs = diff[k]
        estimate = float(per_obs.mean())
        boot = per_obs[boot_idx].mean(axis=1)
        lower, upper = _interval(estimate, boot)
        results.append(AceEstimate(covariate, contrast, pattern, estimate, lower, upper,
                                   reject_null=not (lower <= 0.0 <= upper)))
    return results


def _check_bootstrap(bootstrap: int):
    if bootstrap < MIN_BOOTSTRAP:
        raise InvalidParameter(f"bootstrap count must be at least {MIN_BOOTSTRAP}, got {bootstrap}")


def _format_value(value: float) -> str:
    return f"{value:g}"


def ace_contrast(data: Dataset, params: ModelParams, covariate: str, level: float, reference: float,
                 samples: int, bootstrap: int, rng: np.random.Generator,
                 patterns=gc.PATTERNS, boot_rng: np.random.Generator | None = None) -> list[AceEstimate]:
    """ACE of setting ``covariate`` to ``level`` rather than ``reference``, for each pattern.

    Both interventions use the same latent draws. The bootstrap resamples
    observations with the fitted model held fixed.
    """
    _check_bootstrap(bootstrap)
    column = data.column(covariate)
    patterns = [_parse_pattern(p) for p in patterns]
    eps = rng.standard_normal((samples, params.config.d))
    boot_idx = (boot_rng or rng).integers(0, data.n, size=(bootstrap, data.n))
    contrast = f"{_format_value(level)} vs {_format_value(reference)}"
    degenerate = level == reference
    if degenerate:
        logger.info(f"Contrast {covariate} {contrast} compares a level with itself")
        diff = np.zeros((4, data.n))
    else:
        diff = (_intervened_cells(data, params, column, level, eps)
                - _intervened_cells(data, params, column, reference, eps))
    return _estimates(covariate, contrast, diff, boot_idx, patterns, degenerate)


def ace_categorical(data: Dataset, params: ModelParams, covariate: str, level: float, reference: float,
                    pattern=(1, 1), samples: int = DEFAULT_SAMPLES, bootstrap: int = 1000,
                    rng: np.random.Generator | None = None,
                    boot_rng: np.random.Generator | None = None) -> AceEstimate:
    """ACE of a categorical level against its reference for one outcome pattern."""
    column = data.column(covariate)
    observed = np.unique(data.raw_X[:, column])
    for value in (level, reference):
        if not np.any(np.isclose(observed, value, rtol=0.0, atol=1e-12)):
            raise InvalidLevel(f"Level {value} is not observed in column {covariate}")
    rng = rng if rng is not None else np.random.default_rng()
    return ace_contrast(data, params, covariate, level, reference, samples, bootstrap, rng,
                        patterns=[pattern], boot_rng=boot_rng)[0]


def ace_curve(data: Dataset, params: ModelParams, covariate: str, grid, pattern=(1, 1),
              samples: int = DEFAULT_SAMPLES, bootstrap: int = 1000,
              rng: np.random.Generator | None = None, boot_rng: np.random.Generator | None = None,
              patterns=None) -> list[AceEstimate]:
    """ACE curve of a continuous covariate against its smallest observed value.

    One set of bootstrap indices and latent draws is shared by every grid
    point. Returns one estimate per grid value (per pattern when
    ``patterns`` is given).
    """
    grid = [float(v) for v in grid]
    if not grid:
        raise InvalidParameter(f"ACE grid for {covariate} is empty")
    _check_bootstrap(bootstrap)
    column = data.column(covariate)
    patterns = [_parse_pattern(p) for p in (patterns or [pattern])]
    rng = rng if rng is not None else np.random.default_rng()
    reference = float(data.raw_X[:, column].min())
    eps = rng.standard_normal((samples, params.config.d))
    boot_idx = (boot_rng or rng).integers(0, data.n, size=(bootstrap, data.n))
    base = _intervened_cells(data, params, column, reference, eps)

    results = []
    for value in grid:
        contrast = f"{_format_value(value)} vs {_format_value(reference)}"
        degenerate = value == reference
        diff = np.zeros_like(base) if degenerate else _intervened_cells(data, params, column, value, eps) - base
        results.extend(_estimates(covariate, contrast, diff, boot_idx, patterns, degenerate))
    return results


class CategoricalEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    reference: float
    levels: FloatList


class ContinuousEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    grid: FloatList = Field(min_length=1)


class AceSpec(BaseModel):
    """Covariates and contrasts for an ACE table.

    Config keys: ``categorical.<column>.reference``, ``categorical.<column>.levels``,
    ``continuous.<column>.grid``, plus ``samples``, ``bootstrap``, ``patterns``
    and ``seed``.
    """

    model_config = ConfigDict(extra="forbid")

    samples: int = Field(default=DEFAULT_SAMPLES, ge=1)
    bootstrap: int = 1000
    seed: int = Field(default=0, ge=0)
    patterns: StrList = Field(default_factory=lambda: ["11", "10", "01", "00"])
    categorical: dict[str, CategoricalEntry] = Field(default_factory=dict)
    continuous: dict[str, ContinuousEntry] = Field(default_factory=dict)


def ace_table(data: Dataset, params: ModelParams, spec: AceSpec, rng: np.random.Generator,
              boot_rng: np.random.Generator) -> pd.DataFrame:
    """All requested contrasts in one table, one row per (contrast, pattern)."""
    _check_bootstrap(spec.bootstrap)
    patterns = [_parse_pattern(p) for p in spec.patterns]
    rows: list[AceEstimate] = []
    for name, entry in spec.categorical.items():
        column = data.column(name)
        observed = np.unique(data.raw_X[:, column])
        for value in (entry.reference, *entry.levels):
            if not np.any(np.isclose(observed, value, rtol=0.0, atol=1e-12)):
                raise InvalidLevel(f"Level {value:g} is not observed in column {name}")
        for level in entry.levels:
            rows.extend(ace_contrast(data, params, name, level, entry.reference, spec.samples,
                                     spec.bootstrap, rng, patterns=patterns, boot_rng=boot_rng))
    for name, entry in spec.continuous.items():
        rows.extend(ace_curve(data, params, name, entry.grid, samples=spec.samples,
                              bootstrap=spec.bootstrap, rng=rng, boot_rng=boot_rng, patterns=patterns))
    logger.info(f"Computed {len(rows)} ACE rows")
    return pd.DataFrame([row.to_dict() for row in rows], columns=ACE_COLUMNS)


def monte_carlo_agreement(a: JointPrediction, b: JointPrediction, k: float = 3.0) -> bool:
    """Whether two predictions agree within ``k`` combined Monte Carlo standard errors."""
    se = np.sqrt(np.square(a.cell_se) + np.square(b.cell_se))
    gap = np.abs(a.cells.stack() - b.cells.stack())
    return bool(np.all(gap <= k * se + 1e-12))


def plug_in(X_std: np.ndarray, params: ModelParams) -> JointPrediction:
    """Prediction at z = beta (a single draw with zero noise)."""
    return predict_joint(X_std, params, eps=np.zeros((1, params.config.d)))

