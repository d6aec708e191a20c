"""Region adjacency, CAR precision Q = D - rho*A, and GMRF helpers."""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg, sparse
from scipy.spatial import cKDTree

from src.errors import DimensionMismatch, IsolatedRegion, NotPositiveDefinite

logger = logging.getLogger(__name__)

DEFAULT_RHO = 0.9


@dataclass(frozen=True)
class SpatialGraph:
    """Undirected region graph with a fixed spatial-dependence constant rho."""

    n_regions: int
    edges: tuple[tuple[int, int], ...]
    rho: float = DEFAULT_RHO

    def __post_init__(self):
        if self.n_regions < 1:
            raise ValueError(f"Graph needs at least one region, got {self.n_regions}")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        seen: set[tuple[int, int]] = set()
        normalized = []
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"Self-loop on region {i}")
            if not (0 <= i < self.n_regions and 0 <= j < self.n_regions):
                raise ValueError(f"Edge ({i}, {j}) has an endpoint outside [0, {self.n_regions})")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"Duplicate edge {key}")
            seen.add(key)
            normalized.append(key)
        object.__setattr__(self, "edges", tuple(sorted(normalized)))

    @property
    def L(self) -> int:
        return self.n_regions

    @cached_property
    def edge_array(self) -> np.ndarray:
        return np.array(self.edges, dtype=np.int64).reshape(-1, 2)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.bincount(self.edge_array.ravel(), minlength=self.n_regions).astype(np.int64)

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        e = self.edge_array
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        data = np.ones(rows.size)
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.n_regions, self.n_regions))

    @cached_property
    def precision(self) -> sparse.csr_matrix:
        """Q = D - rho * A."""
        return (sparse.diags(self.degrees.astype(float)) - self.rho * self.adjacency).tocsr()

    def neighbors(self, region: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[region]:a.indptr[region + 1]]

    def with_rho(self, rho: float) -> "SpatialGraph":
        return SpatialGraph(self.n_regions, self.edges, rho)


@dataclass(frozen=True)
class PrecisionFactor:
    """Cached Cholesky factor of Q with its log-determinant."""

    lower: np.ndarray
    log_det: float
    precision: np.ndarray = field(repr=False)

    @property
    def L(self) -> int:
        return self.lower.shape[0]


def build_precision(graph: SpatialGraph) -> PrecisionFactor:
    """Factorize Q = LL^T and cache log|Q|."""
    isolated = np.flatnonzero(graph.degrees == 0).tolist()
    if isolated:
        raise IsolatedRegion(isolated)

    q = graph.precision.toarray()
    try:
        lower = linalg.cholesky(q, lower=True)
    except linalg.LinAlgError as e:
        raise NotPositiveDefinite(f"Cholesky of Q failed: {e}") from e

    log_det = 2.0 * float(np.sum(np.log(np.diag(lower))))
    logger.debug(f"Built precision factor: L={graph.L}, edges={len(graph.edges)}, log|Q|={log_det:.5f}")
    return PrecisionFactor(lower=lower, log_det=log_det, precision=q)


def _check_length(mu: np.ndarray, length: int) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if mu.shape[0] != length:
        raise DimensionMismatch(f"Expected {length} regions, got {mu.shape[0]}")
    return mu


def gmrf_logpdf(mu_k: np.ndarray, factor: PrecisionFactor, tau: float) -> float:
    """Log-density of N(0, (tau Q)^-1) at ``mu_k``."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    mu_k = _check_length(mu_k, factor.L)
    if mu_k.ndim != 1:
        raise DimensionMismatch(f"Expected a vector, got shape {mu_k.shape}")
    scaled = factor.lower.T @ mu_k
    quad = float(scaled @ scaled)
    n = factor.L
    return 0.5 * n * math.log(tau) + 0.5 * factor.log_det - 0.5 * n * math.log(2 * math.pi) - 0.5 * tau * quad


def gmrf_sample(factor: PrecisionFactor, tau: float, rng: np.random.Generator,
                size: int | None = None) -> np.ndarray:
    """Exact draw(s) with covariance (tau Q)^-1.

    Solves L^T x = w for standard normal w. With ``size`` the result has shape
    ``(L, size)``, one draw per column.
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    shape = (factor.L,) if size is None else (factor.L, size)
    noise = rng.standard_normal(shape)
    draw = linalg.solve_triangular(factor.lower, noise, trans="T", lower=True)
    return draw / math.sqrt(tau)


def quadratic_form(mu_k: np.ndarray, graph: SpatialGraph) -> float | np.ndarray:
    """mu^T Q mu evaluated edgewise; a 2-D input gives one value per column."""
    mu_k = _check_length(mu_k, graph.L)
    e = graph.edge_array
    deg = graph.degrees.astype(float)
    if mu_k.ndim == 1:
        return float(deg @ (mu_k ** 2) - 2.0 * graph.rho * np.sum(mu_k[e[:, 0]] * mu_k[e[:, 1]]))
    diag = deg @ (mu_k ** 2)
    cross = np.sum(mu_k[e[:, 0]] * mu_k[e[:, 1]], axis=0)
    return diag - 2.0 * graph.rho * cross


def precision_matvec(mu: np.ndarray, graph: SpatialGraph) -> np.ndarray:
    """Q @ mu without forming a dense Q."""
    mu = _check_length(mu, graph.L)
    return graph.precision @ mu


def morans_i(values: np.ndarray, graph: SpatialGraph) -> float:
    """Moran's I of one value per region under binary adjacency weights."""
    values = _check_length(values, graph.L)
    centered = values - values.mean()
    denom = float(centered @ centered)
    if denom == 0.0 or not graph.edges:
        return 0.0
    e = graph.edge_array
    cross = 2.0 * float(np.sum(centered[e[:, 0]] * centered[e[:, 1]]))
    total_weight = 2.0 * len(graph.edges)
    return graph.L / total_weight * cross / denom


# Graph builders

def path_graph(n_regions: int, rho: float = DEFAULT_RHO) -> SpatialGraph:
    return SpatialGraph(n_regions, tuple((i, i + 1) for i in range(n_regions - 1)), rho)


def grid_graph(rows: int, cols: int, rho: float = DEFAULT_RHO, n_regions: int | None = None) -> SpatialGraph:
    """Rook-adjacency grid, numbered row-major; ``n_regions`` truncates the last row."""
    total = rows * cols if n_regions is None else n_regions
    if total > rows * cols:
        raise ValueError(f"{total} regions do not fit a {rows}x{cols} grid")
    edges = []
    for idx in range(total):
        r, c = divmod(idx, cols)
        if c + 1 < cols and idx + 1 < total:
            edges.append((idx, idx + 1))
        if (r + 1) * cols + c < total:
            edges.append((idx, idx + cols))
    return SpatialGraph(total, tuple(edges), rho)


def square_grid(n_regions: int, rho: float = DEFAULT_RHO) -> SpatialGraph:
    """Near-square grid holding exactly ``n_regions`` regions."""
    rows = max(1, int(math.isqrt(n_regions)))
    cols = math.ceil(n_regions / rows)
    return grid_graph(rows, cols, rho, n_regions=n_regions)


def random_geometric_graph(n_regions: int, rng: np.random.Generator, radius: float | None = None,
                           rho: float = DEFAULT_RHO) -> tuple[SpatialGraph, np.ndarray]:
    """Regions as random points in the unit square, linked within ``radius``.

    Points left without neighbours are joined to their nearest point so every
    region has degree at least one. Returns the graph and the coordinates.
    """
    coords = rng.uniform(size=(n_regions, 2))
    if radius is None:
        radius = 1.5 * math.sqrt(math.log(max(n_regions, 2)) / (math.pi * n_regions))
    tree = cKDTree(coords)
    edges = set(tree.query_pairs(r=radius))
    degree = np.zeros(n_regions, dtype=int)
    for i, j in edges:
        degree[i] += 1
        degree[j] += 1
    for i in np.flatnonzero(degree == 0):
        _, nearest = tree.query(coords[i], k=2)
        j = int(nearest[1])
        edges.add((min(i, j), max(i, j)))
    return SpatialGraph(n_regions, tuple(sorted((int(i), int(j)) for i, j in edges)), rho), coords
