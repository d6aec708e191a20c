"""Bivariate Gumbel copula: CDF, Bernoulli cells, dependence summaries, sampling.

All functions broadcast over numpy arrays. Marginal probabilities are not
clamped here; callers feeding model outputs clamp them with
``clamp_probability`` first.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-6
CELL_FLOOR = 1e-12
ALPHA_MIN = 1.0 + 1e-6
ALPHA_MAX = 50.0

# Cell order used everywhere: (1,1), (1,0), (0,1), (0,0).
PATTERNS = ((1, 1), (1, 0), (0, 1), (0, 0))


@dataclass(frozen=True)
class CellProbs:
    """Joint Bernoulli probabilities; fields may be scalars or arrays."""

    p11: np.ndarray
    p10: np.ndarray
    p01: np.ndarray
    p00: np.ndarray

    @property
    def p1(self) -> np.ndarray:
        return self.p11 + self.p10

    @property
    def p2(self) -> np.ndarray:
        return self.p11 + self.p01

    def stack(self) -> np.ndarray:
        """Cells along a new leading axis, in ``PATTERNS`` order."""
        return np.stack([self.p11, self.p10, self.p01, self.p00])

    def cell(self, y1: int, y2: int) -> np.ndarray:
        return self.stack()[pattern_index(y1, y2)]


def pattern_index(y1, y2):
    """Position of outcome pattern (y1, y2) in ``PATTERNS``."""
    return (1 - np.asarray(y1)) * 2 + (1 - np.asarray(y2))


def clamp_probability(p: np.ndarray) -> np.ndarray:
    return np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)


def alpha_from_raw(raw: float) -> float:
    """alpha = 1 + softplus(raw), kept inside [ALPHA_MIN, ALPHA_MAX]."""
    return float(np.clip(1.0 + np.logaddexp(0.0, raw), ALPHA_MIN, ALPHA_MAX))


def alpha_raw_derivative(raw: float) -> float:
    """d alpha / d raw; zero where the clip is active."""
    alpha = 1.0 + np.logaddexp(0.0, raw)
    if alpha < ALPHA_MIN or alpha > ALPHA_MAX:
        return 0.0
    return float(1.0 / (1.0 + np.exp(-raw)))


def raw_from_alpha(alpha: float) -> float:
    """Inverse of ``alpha_from_raw`` for alpha strictly above 1."""
    alpha = float(np.clip(alpha, ALPHA_MIN, ALPHA_MAX))
    excess = alpha - 1.0
    # inverse softplus
    return float(excess + np.log(-np.expm1(-excess)))


def _check_inputs(p1, p2, alpha):
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    if np.isnan(p1).any() or np.isnan(p2).any() or np.isnan(alpha):
        raise ValueError("NaN passed to the Gumbel copula")
    if alpha < 1.0:
        raise ValueError(f"Gumbel copula needs alpha >= 1, got {alpha}")
    return p1, p2


def _scaled_logs(p1, p2):
    """-log p for both margins, divided by their elementwise maximum m."""
    with np.errstate(divide="ignore"):
        u = -np.log(p1)
        v = -np.log(p2)
    m = np.maximum(u, v)
    safe = np.where((m > 0) & np.isfinite(m), m, 1.0)
    return u / safe, v / safe, m


def cdf(p1, p2, alpha: float):
    """C(p1, p2) = exp(-[(-log p1)^a + (-log p2)^a]^(1/a))."""
    p1, p2 = _check_inputs(p1, p2, alpha)
    r1, r2, m = _scaled_logs(p1, p2)
    with np.errstate(invalid="ignore", over="ignore"):
        s = m * (r1 ** alpha + r2 ** alpha) ** (1.0 / alpha)
        out = np.exp(-s)
    out = np.where((p1 <= 0) | (p2 <= 0), 0.0, out)
    return out if out.ndim else float(out)


def cdf_partials(p1, p2, alpha: float):
    """Closed-form (dC/dp1, dC/dp2, dC/dalpha) for p1, p2 inside (0, 1)."""
    p1, p2 = _check_inputs(p1, p2, alpha)
    r1, r2, m = _scaled_logs(p1, p2)
    a1 = r1 ** alpha
    a2 = r2 ** alpha
    total = a1 + a2
    s_scaled = total ** (1.0 / alpha)
    c = np.exp(-m * s_scaled)

    # dS/du = (u / S)^(alpha - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = c * (r1 / s_scaled) ** (alpha - 1.0) / p1
        d2 = c * (r2 / s_scaled) ** (alpha - 1.0) / p2
        l1 = np.where(r1 > 0, a1 * np.log(np.where(r1 > 0, r1, 1.0)), 0.0)
        l2 = np.where(r2 > 0, a2 * np.log(np.where(r2 > 0, r2, 1.0)), 0.0)
    dlog_s = -np.log(total) / alpha ** 2 + (l1 + l2) / (alpha * total)
    da = -c * m * s_scaled * dlog_s
    return d1, d2, da


def cell_probs(p1, p2, alpha: float) -> CellProbs:
    """Four joint Bernoulli cells, floored at CELL_FLOOR and renormalized."""
    p1, p2 = _check_inputs(p1, p2, alpha)
    c = cdf(p1, p2, alpha)
    raw = np.stack([c, p1 - c, p2 - c, 1.0 - p1 - p2 + c])
    cells = np.clip(raw, CELL_FLOOR, 1.0)
    cells = cells / cells.sum(axis=0)
    return CellProbs(*cells)


def log_joint_bernoulli(y1, y2, cells: CellProbs):
    """log p11^(y1 y2) p10^(y1 (1-y2)) p01^((1-y1) y2) p00^((1-y1)(1-y2))."""
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    return (
        y1 * y2 * np.log(cells.p11)
        + y1 * (1 - y2) * np.log(cells.p10)
        + (1 - y1) * y2 * np.log(cells.p01)
        + (1 - y1) * (1 - y2) * np.log(cells.p00)
    )


@dataclass
class JointLikelihood:
    """Per-observation log-likelihood with its derivatives."""

    log_lik: np.ndarray
    d_p1: np.ndarray
    d_p2: np.ndarray
    d_alpha: np.ndarray


def joint_log_likelihood(y1, y2, p1, p2, alpha: float) -> JointLikelihood:
    """log P(Y1=y1, Y2=y2) through the clamped cells, with d/dp1, d/dp2, d/dalpha.

    The floor-and-renormalize step of ``cell_probs`` is differentiated exactly:
    a floored cell contributes no gradient.
    """
    p1, p2 = _check_inputs(p1, p2, alpha)
    c = cdf(p1, p2, alpha)
    dc1, dc2, dca = cdf_partials(p1, p2, alpha)
    raw = np.stack([c, p1 - c, p2 - c, 1.0 - p1 - p2 + c])
    draw_dp1 = np.stack([dc1, 1.0 - dc1, -dc1, dc1 - 1.0])
    draw_dp2 = np.stack([dc2, -dc2, 1.0 - dc2, dc2 - 1.0])
    draw_da = np.stack([dca, -dca, -dca, dca])

    active = (raw > CELL_FLOOR) & (raw < 1.0)
    cells = np.clip(raw, CELL_FLOOR, 1.0)
    total = cells.sum(axis=0)

    k = pattern_index(y1, y2).astype(int)
    cols = np.arange(cells.shape[1]) if cells.ndim > 1 else None
    picked = cells[k, cols] if cols is not None else cells[k]
    log_lik = np.log(picked) - np.log(total)

    selector = np.zeros_like(cells)
    if cols is not None:
        selector[k, cols] = 1.0 / picked
    else:
        selector[k] = 1.0 / picked
    dll_draw = active * (selector - 1.0 / total)

    return JointLikelihood(
        log_lik=log_lik,
        d_p1=np.sum(dll_draw * draw_dp1, axis=0),
        d_p2=np.sum(dll_draw * draw_dp2, axis=0),
        d_alpha=np.sum(dll_draw * draw_da, axis=0),
    )


def upper_tail_dependence(alpha: float) -> float:
    """Upper tail dependence 2 - 2^(1/alpha)."""
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    if math.isinf(alpha):
        return 1.0
    return 2.0 - 2.0 ** (1.0 / alpha)


def kendall_tau(alpha: float) -> float:
    """Kendall's tau of the Gumbel copula, 1 - 1/alpha."""
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    return 1.0 - 1.0 / alpha


def log_positive_stable(index: float, size, rng: np.random.Generator) -> np.ndarray:
    """Log of positive stable draws with Laplace transform exp(-t^index), 0 < index <= 1.

    Chambers-Mallows-Stuck construction in Kanter's form for total skew,
    evaluated on the log scale so small indices neither overflow nor underflow.
    """
    if not 0 < index <= 1:
        raise ValueError(f"stable index must be in (0, 1], got {index}")
    w = rng.uniform(0.0, math.pi, size)
    e = rng.standard_exponential(size)
    if index == 1.0:
        return np.zeros(size)
    return (
        np.log(np.sin(index * w))
        - np.log(np.sin(w)) / index
        + (1.0 - index) / index * (np.log(np.sin((1.0 - index) * w)) - np.log(e))
    )


def positive_stable(index: float, size, rng: np.random.Generator) -> np.ndarray:
    return np.exp(log_positive_stable(index, size, rng))


def sample_pairs(alpha: float, size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """``size`` draws of (U1, U2) ~ C_alpha via the Marshall-Olkin frailty."""
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    log_v = log_positive_stable(1.0 / alpha, size, rng)
    e = rng.standard_exponential((2, size))
    u = np.exp(-np.exp((np.log(e) - log_v) / alpha))
    return u[0], u[1]


def sample_pair(alpha: float, rng: np.random.Generator) -> tuple[float, float]:
    u1, u2 = sample_pairs(alpha, 1, rng)
    return float(u1[0]), float(u2[0])
