"""Tests for AUC, sign tests and benchmark summaries."""

import math

import numpy as np
import pandas as pd
import pytest

from src.errors import InsufficientSeeds, SingleClass
from src.services.metrics import (
    alpha_recovery_table,
    auc,
    benchmark_report,
    lambda_trend_table,
    sign_test,
    timing_table,
)


def results_frame(scores: dict[str, list[float]], recon_weight: float = 1.0, alpha_true: float = 2.0,
                  n: int = 1000) -> pd.DataFrame:
    rows = []
    for variant, values in scores.items():
        for seed, value in enumerate(values):
            rows.append({
                "cell_id": "C001", "variant": variant, "seed": seed,
                "auc_y1": value, "auc_y2": value - 0.01,
                "alpha_hat": 2.1 if variant == "vae_copula" else math.nan,
                "tau_hat": 1.0, "seconds": 10.0 if variant == "vae_copula" else 1.0,
                "n": n, "recon_weight": recon_weight, "alpha_true": alpha_true,
                "noise_sigma2": 0.0, "status": "ok",
            })
    return pd.DataFrame(rows)


class TestAuc:
    """Tests for the Mann-Whitney AUC."""

    def test_perfect(self):
        assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_all_ties(self):
        assert auc([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 1]) == 0.5

    def test_hand_example(self):
        assert auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75)

    def test_invariant_to_monotone_maps(self):
        rng = np.random.default_rng(9)
        scores = rng.normal(size=300)
        labels = rng.integers(0, 2, size=300)
        base = auc(scores, labels)
        assert auc(np.exp(3 * scores) + 1, labels) == pytest.approx(base, abs=1e-12)
        assert auc(np.tanh(scores), labels) == pytest.approx(base, abs=1e-12)

    def test_single_class(self):
        with pytest.raises(SingleClass):
            auc([0.1, 0.2], [1, 1])


class TestSignTest:
    """Tests for the exact sign test."""

    def test_identical(self):
        assert sign_test([0.7, 0.8], [0.7, 0.8]) == (0, 0, 2, 1.0)

    def test_all_wins(self):
        wins, losses, ties, p = sign_test([0.9] * 5, [0.8] * 5)
        assert (wins, losses, ties) == (5, 0, 0)
        assert p == pytest.approx(2 * 0.5 ** 5)


class TestBenchmarkReport:
    """Tests for the benchmark summary."""

    def test_identical_variants(self):
        scores = [0.70, 0.72, 0.71]
        report = benchmark_report(results_frame({"vae_copula": scores, "logistic": scores}))
        medians = report.auc.set_index(["variant", "outcome"])["median"]
        assert medians[("vae_copula", "auc_y1")] == medians[("logistic", "auc_y1")]
        assert (report.sign_tests["p_value"] == 1.0).all()

    def test_dominating_reference(self):
        report = benchmark_report(results_frame({
            "vae_copula": [0.80, 0.81, 0.82, 0.83, 0.84],
            "logistic": [0.70, 0.71, 0.72, 0.73, 0.74],
        }))
        row = report.sign_tests[report.sign_tests["outcome"] == "auc_y1"].iloc[0]
        assert (row["wins"], row["losses"]) == (5, 0)
        assert row["p_value"] == pytest.approx(0.0625)

    def test_no_results(self):
        with pytest.raises(InsufficientSeeds):
            benchmark_report(results_frame({}).reindex(columns=["cell_id", "variant", "seed", "status"]))

    def test_too_few_seeds(self):
        with pytest.raises(InsufficientSeeds):
            benchmark_report(results_frame({"vae_copula": [0.8, 0.8], "logistic": [0.7, 0.7]}))

    def test_failed_rows_are_ignored(self):
        frame = results_frame({"vae_copula": [0.8, 0.8, 0.8], "logistic": [0.7, 0.7, 0.7]})
        failed = frame.iloc[[0]].assign(seed=9, auc_y1=math.nan, status="failed: boom")
        report = benchmark_report(pd.concat([frame, failed], ignore_index=True))
        assert report.auc["n_runs"].max() == 3

    def test_summary_serializes(self):
        report = benchmark_report(results_frame({"vae_copula": [0.8, 0.81, 0.82], "logistic": [0.7] * 3}))
        data = report.to_dict()
        assert set(data) == {"auc", "sign_tests", "timing", "alpha_recovery", "lambda_trend"}


class TestTables:
    """Tests for the auxiliary tables."""

    def test_timing(self):
        table = timing_table(results_frame({"vae_copula": [0.8] * 3, "logistic": [0.7] * 3}))
        row = table[table["variant"] == "vae_copula"].iloc[0]
        assert row["median_seconds"] == 10.0
        assert row["log10_seconds"] == pytest.approx(1.0)

    def test_alpha_recovery_only_for_copula(self):
        table = alpha_recovery_table(results_frame({"vae_copula": [0.8] * 3, "logistic": [0.7] * 3}))
        assert table["variant"].tolist() == ["vae_copula"]
        assert table["median_alpha_hat"].iloc[0] == pytest.approx(2.1)

    def test_lambda_trend(self):
        frames = [results_frame({"vae_copula": [0.70 + 0.02 * k] * 3}, recon_weight=lam)
                  for k, lam in enumerate([0.1, 1.0, 10.0])]
        table = lambda_trend_table(pd.concat(frames, ignore_index=True))
        assert table["spearman"].tolist() == pytest.approx([1.0, 1.0])
        assert table["n_levels"].tolist() == [3, 3]

    def test_lambda_trend_needs_two_levels(self):
        assert lambda_trend_table(results_frame({"vae_copula": [0.8] * 3})).empty
