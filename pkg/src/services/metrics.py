"""AUC and benchmark summaries."""

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.stats import binomtest, rankdata, spearmanr

from src.errors import InsufficientSeeds, SingleClass

logger = logging.getLogger(__name__)

REFERENCE_VARIANT = "vae_copula"
OUTCOMES = ("auc_y1", "auc_y2")


def auc(scores, labels) -> float:
    """Mann-Whitney AUC with half credit for ties."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.size} scores for {labels.size} labels")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass(f"AUC needs both classes, got {n_pos} positives and {n_neg} negatives")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def sign_test(a, b) -> tuple[int, int, int, float]:
    """Two-sided exact sign test of paired values; ties are dropped.

    Returns (wins of a, losses of a, ties, p-value).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    wins = int(np.sum(a > b))
    losses = int(np.sum(a < b))
    ties = a.size - wins - losses
    if wins + losses == 0:
        return wins, losses, ties, 1.0
    return wins, losses, ties, float(binomtest(wins, wins + losses, 0.5).pvalue)


@dataclass
class BenchmarkSummary:
    auc: pd.DataFrame
    sign_tests: pd.DataFrame
    timing: pd.DataFrame
    alpha_recovery: pd.DataFrame
    lambda_trend: pd.DataFrame

    def to_dict(self) -> dict[str, list[dict]]:
        return {name: frame.to_dict(orient="records") for name, frame in vars(self).items()}


def _ok_rows(results: pd.DataFrame) -> pd.DataFrame:
    if "status" in results.columns:
        return results[results["status"] == "ok"]
    return results


def benchmark_report(results: pd.DataFrame, reference: str = REFERENCE_VARIANT,
                     min_seeds: int = 3) -> BenchmarkSummary:
    """Per-variant AUC medians and IQRs, plus sign tests of ``reference`` against each baseline."""
    ok = _ok_rows(results)
    variants = sorted(ok["variant"].unique()) if len(ok) else []
    seeds = ok["seed"].nunique() if len(ok) else 0
    if len(variants) < 2:
        raise InsufficientSeeds(f"Need at least 2 variants with results, got {len(variants)}")
    if seeds < min_seeds:
        raise InsufficientSeeds(f"Need at least {min_seeds} seeds, got {seeds}")

    auc_rows = []
    for variant, group in ok.groupby("variant", sort=True):
        for outcome in OUTCOMES:
            values = group[outcome].dropna()
            q1, median, q3 = np.percentile(values, [25, 50, 75]) if len(values) else (math.nan,) * 3
            auc_rows.append({
                "variant": variant,
                "outcome": outcome,
                "n_runs": len(values),
                "median": float(median),
                "q1": float(q1),
                "q3": float(q3),
                "iqr": float(q3 - q1),
            })

    sign_rows = []
    if reference in variants:
        ref = ok[ok["variant"] == reference].set_index(["cell_id", "seed"])
        for baseline in variants:
            if baseline == reference:
                continue
            other = ok[ok["variant"] == baseline].set_index(["cell_id", "seed"])
            for outcome in OUTCOMES:
                paired = ref[[outcome]].join(other[[outcome]], how="inner", rsuffix="_base").dropna()
                wins, losses, ties, p_value = sign_test(paired[outcome], paired[f"{outcome}_base"])
                sign_rows.append({
                    "reference": reference,
                    "baseline": baseline,
                    "outcome": outcome,
                    "wins": wins,
                    "losses": losses,
                    "ties": ties,
                    "p_value": p_value,
                })
    else:
        logger.warning(f"Reference variant {reference} has no results; skipping sign tests")

    summary = BenchmarkSummary(
        auc=pd.DataFrame(auc_rows),
        sign_tests=pd.DataFrame(sign_rows, columns=["reference", "baseline", "outcome", "wins", "losses",
                                                    "ties", "p_value"]),
        timing=timing_table(ok),
        alpha_recovery=alpha_recovery_table(ok),
        lambda_trend=lambda_trend_table(ok, reference),
    )
    logger.info(f"Summarised {len(ok)} runs over {len(variants)} variants and {seeds} seeds")
    return summary


def timing_table(results: pd.DataFrame) -> pd.DataFrame:
    """Median wall-clock seconds and their log10 per (n, variant)."""
    columns = ["n", "variant", "median_seconds", "log10_seconds"]
    if "n" not in results.columns or results.empty:
        return pd.DataFrame(columns=columns)
    table = results.groupby(["n", "variant"], sort=True)["seconds"].median().reset_index()
    table.columns = ["n", "variant", "median_seconds"]
    table["log10_seconds"] = np.log10(table["median_seconds"])
    return table[columns]


def alpha_recovery_table(results: pd.DataFrame) -> pd.DataFrame:
    """Median estimated alpha per true alpha for the copula variants."""
    columns = ["alpha_true", "variant", "median_alpha_hat", "q1", "q3"]
    if "alpha_true" not in results.columns:
        return pd.DataFrame(columns=columns)
    rows = results.dropna(subset=["alpha_hat"])
    if rows.empty:
        return pd.DataFrame(columns=columns)
    grouped = rows.groupby(["alpha_true", "variant"], sort=True)["alpha_hat"]
    table = pd.DataFrame({
        "median_alpha_hat": grouped.median(),
        "q1": grouped.quantile(0.25),
        "q3": grouped.quantile(0.75),
    }).reset_index()
    return table[columns]


def lambda_trend_table(results: pd.DataFrame, reference: str = REFERENCE_VARIANT) -> pd.DataFrame:
    """Spearman correlation between recon_weight and the reference variant's median AUC."""
    columns = ["variant", "outcome", "n_levels", "spearman"]
    if "recon_weight" not in results.columns:
        return pd.DataFrame(columns=columns)
    rows = results[results["variant"] == reference]
    if rows["recon_weight"].nunique() < 2:
        return pd.DataFrame(columns=columns)
    out = []
    for outcome in OUTCOMES:
        medians = rows.groupby("recon_weight", sort=True)[outcome].median()
        rho = spearmanr(medians.index.to_numpy(), medians.to_numpy()).statistic if len(medians) > 2 else math.nan
        if len(medians) == 2:
            diff = medians.iloc[1] - medians.iloc[0]
            rho = float(np.sign(diff))
        out.append({"variant": reference, "outcome": outcome, "n_levels": len(medians), "spearman": float(rho)})
    return pd.DataFrame(out, columns=columns)
