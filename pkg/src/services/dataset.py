"""In-memory dataset of (region, covariates, binary outcome pair)."""

from dataclasses import dataclass, field, replace

import numpy as np

from src.errors import DimensionMismatch, UnknownColumn


@dataclass(frozen=True, eq=False)
class Standardization:
    """Per-column mean and scale; constant columns keep scale 1."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardization":
        X = np.asarray(X, dtype=float)
        mean = X.mean(axis=0)
        sd = X.std(axis=0)
        scale = np.where(sd > 0, sd, 1.0)
        return cls(mean=mean, scale=scale)

    @classmethod
    def identity(cls, p: int) -> "Standardization":
        return cls(mean=np.zeros(p), scale=np.ones(p))

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def invert(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) * self.scale + self.mean

    def matches(self, other: "Standardization | None") -> bool:
        return (
            other is not None
            and np.array_equal(self.mean, other.mean)
            and np.array_equal(self.scale, other.scale)
        )


@dataclass(eq=False)
class Dataset:
    """n observations: covariates X (n x p), outcomes Y (n x 2), region index per row.

    ``standardization`` is set once X holds standardized values; ``raw_X``
    then recovers the original units.
    """

    X: np.ndarray
    Y: np.ndarray
    region: np.ndarray
    feature_names: list[str]
    standardization: Standardization | None = None
    outcome_names: tuple[str, str] = ("y1", "y2")
    obs_id: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.Y = np.asarray(self.Y, dtype=np.int64)
        self.region = np.asarray(self.region, dtype=np.int64)
        if self.X.ndim != 2:
            self.X = self.X.reshape(len(self.region), -1)
        n = self.X.shape[0]
        if self.Y.shape != (n, 2) or self.region.shape != (n,):
            raise DimensionMismatch(f"X has {n} rows but Y is {self.Y.shape} and region is {self.region.shape}")
        if len(self.feature_names) != self.X.shape[1]:
            raise DimensionMismatch(f"{len(self.feature_names)} feature names for {self.X.shape[1]} columns")
        if self.obs_id is None:
            self.obs_id = np.arange(n)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def raw_X(self) -> np.ndarray:
        return self.X if self.standardization is None else self.standardization.invert(self.X)

    def column(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise UnknownColumn(f"Unknown covariate column: {name}") from None

    def subset(self, idx: np.ndarray) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return replace(self, X=self.X[idx], Y=self.Y[idx], region=self.region[idx], obs_id=self.obs_id[idx])

    def standardized(self, stats: Standardization) -> "Dataset":
        """Dataset expressed with ``stats``; a no-op when already standardized by them."""
        if stats.matches(self.standardization):
            return self
        return replace(self, X=stats.apply(self.raw_X), standardization=stats)

    def with_column(self, name: str, values: np.ndarray) -> "Dataset":
        """Raw-unit dataset with one extra covariate appended."""
        X = np.column_stack([self.raw_X, np.asarray(values, dtype=float)])
        return replace(self, X=X, feature_names=[*self.feature_names, name], standardization=None)

    def with_outcomes(self, Y: np.ndarray) -> "Dataset":
        return replace(self, Y=np.asarray(Y, dtype=np.int64))
