"""Spatial copula VAE - command-line entry point."""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from src import __version__
from src.config import settings
from src.errors import InsufficientSeeds, ScvaeError, UnknownRegion
from src.services.ablation import AblationGrid, run_ablation
from src.services.baselines import VaeVariant, Variant
from src.services.checkpoint import load_checkpoint, save_checkpoint
from src.services.data_sources import (
    CsvDatasetSource,
    read_adjacency,
    write_adjacency,
    write_dataset,
    write_frame,
    write_ground_truth,
)
from src.services.html_report import html_report
from src.services.inference import AceSpec, ace_table, observation_table, predict_dataset, region_table
from src.services.metrics import auc, benchmark_report
from src.services.run_service import run_service
from src.services.scvae_model import ModelConfig, encode, unseen_region_means
from src.services.synthetic_data import SimConfig, SimulatedDatasetSource
from src.services.trainer import TrainConfig, fit, split
from src.utils.config_file import build_model, nest, read_config_file, route_sections
from src.utils.seeding import stream

# Configure logging
logging.basicConfig(
    level=logging.DEBUG if settings.debug else logging.INFO,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger(__name__)


def _load_config(path: str | None) -> tuple[dict[str, str], dict[str, int]]:
    if path is None:
        return {}, {}
    return read_config_file(path)


def _section_lines(name: str, values: dict[str, str], line_of: dict[str, int]) -> dict[str, int]:
    """Line numbers of a routed section, keyed the way ``build_model`` reports them."""
    return {f"{name}.{key}": line_of.get(f"{name}.{key}", line_of.get(key)) for key in values}


def _output_dir(args: argparse.Namespace) -> Path:
    return Path(args.out) if args.out else run_service.default_output_dir(args.command)


def _parse_pair(text: str | None) -> tuple[str, str] | None:
    if text is None:
        return None
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if len(parts) != 2:
        raise ScvaeError(f"--pair needs two outcome columns, got '{text}'")
    return parts[0], parts[1]


def cmd_simulate(args: argparse.Namespace) -> None:
    values, line_of = _load_config(args.config)
    if args.seed is not None:
        values["seed"] = str(args.seed)
    config = build_model(SimConfig, values, line_of)
    out = _output_dir(args)
    source = SimulatedDatasetSource(config)
    with run_service.track("simulate", out, config.model_dump(), config.seed,
                           [args.config, *source.inputs] if args.config else source.inputs) as manifest:
        data = source.fetch()
        manifest.add_output(write_dataset(data, out / "dataset.csv"))
        manifest.add_output(write_adjacency(source.truth.graph, out / "adjacency.txt"))
        for path in write_ground_truth(source.truth, data, out):
            manifest.add_output(path)
        manifest.summary = {"n": data.n, "n_regions": source.truth.graph.L, "p": data.p}
    print(f"Simulated {data.n} rows over {source.truth.graph.L} regions into {out}")


def cmd_train(args: argparse.Namespace) -> None:
    values, line_of = _load_config(args.config)
    routed = route_sections(values, {"model": ModelConfig, "train": TrainConfig})
    if "seed" not in routed["train"]:
        routed["train"]["seed"] = str(settings.default_seed if args.seed is None else args.seed)
    elif args.seed is not None:
        routed["train"]["seed"] = str(args.seed)
    model_config = build_model(ModelConfig, routed["model"], _section_lines("model", routed["model"], line_of),
                               prefix="model.")
    train_config = build_model(TrainConfig, routed["train"], _section_lines("train", routed["train"], line_of),
                               prefix="train.")

    out = _output_dir(args)
    source = CsvDatasetSource(args.data, _parse_pair(args.pair))
    inputs = [*source.inputs, args.adjacency, *([args.config] if args.config else [])]
    config = {"model": model_config.model_dump(), "train": train_config.model_dump(), "pair": args.pair}
    with run_service.track("train", out, config, train_config.seed, inputs) as manifest:
        data = source.fetch()
        graph = read_adjacency(args.adjacency, rho=model_config.rho)
        if data.region.max() >= graph.L:
            raise UnknownRegion(f"Dataset uses region {data.region.max()} but the graph has {graph.L} regions")
        train, test = split(data, train_config.train_fraction, train_config.seed, train_config.holdout_regions)
        result = fit(train, graph, model_config, train_config)
        params = result.params

        manifest.add_output(save_checkpoint(out / "checkpoint.npz", params, graph))
        manifest.add_output(write_frame(result.history_frame(), out / "history.csv"))
        split_frame = pd.DataFrame({
            "obs_id": np.concatenate([train.obs_id, test.obs_id]),
            "split": ["train"] * train.n + ["test"] * test.n,
        }).sort_values("obs_id")
        manifest.add_output(write_frame(split_frame, out / "split.csv"))

        test_auc = {}
        probs = VaeVariant(params, Variant.VAE_COPULA, seed=train_config.seed).predict_marginals(test)
        for k, name in enumerate(data.outcome_names):
            try:
                test_auc[name] = auc(probs[:, k], test.Y[:, k])
            except ScvaeError as e:
                logger.warning(f"Test AUC for {name} unavailable: {e}")
        manifest.summary = {
            "tau": params.tau,
            "alpha": params.alpha,
            "recon_weight": params.recon_weight,
            "best_val_loss": result.best_val_loss,
            "best_epoch": result.best_epoch,
            "stopped_epoch": result.stopped_epoch,
            "test_auc": test_auc,
        }
    print(
        f"tau={params.tau:.6g} alpha={params.alpha:.6g} lambda={params.recon_weight:.6g} "
        f"val_loss={result.best_val_loss:.6g} (best epoch {result.best_epoch}, stopped {result.stopped_epoch})"
    )


def cmd_predict(args: argparse.Namespace) -> None:
    out = _output_dir(args)
    source = CsvDatasetSource(args.data, _parse_pair(args.pair))
    seed = settings.default_seed if args.seed is None else args.seed
    config = {"samples": args.samples}
    with run_service.track("predict", out, config, seed, [*source.inputs, args.checkpoint]) as manifest:
        params, _ = load_checkpoint(args.checkpoint)
        data = source.fetch()
        prediction = predict_dataset(data, params, args.samples, stream(seed, "predict"))
        table, empty = region_table(data, params, prediction=prediction)
        manifest.add_output(write_frame(table, out / "region_table.csv"))
        manifest.add_output(write_frame(observation_table(data, prediction), out / "observations.csv"))
        manifest.add_output(write_frame(pd.DataFrame({"region_id": empty}), out / "empty_regions.csv"))
        manifest.summary = {"regions": len(table), "empty_regions": len(empty), "samples": args.samples}
    print(f"Predicted {data.n} rows; region table has {len(table)} rows, {len(empty)} empty regions")


def cmd_ace(args: argparse.Namespace) -> None:
    values, line_of = _load_config(args.spec)
    if args.seed is not None:
        values["seed"] = str(args.seed)
    spec = build_model(AceSpec, nest(values), line_of)
    out = _output_dir(args)
    source = CsvDatasetSource(args.data, _parse_pair(args.pair))
    with run_service.track("ace", out, spec.model_dump(), spec.seed,
                           [*source.inputs, args.checkpoint, args.spec]) as manifest:
        params, _ = load_checkpoint(args.checkpoint)
        data = source.fetch()
        table = ace_table(data, params, spec, stream(spec.seed, "predict"), stream(spec.seed, "bootstrap"))
        manifest.add_output(write_frame(table, out / "ace.csv"))
        manifest.summary = {"rows": len(table), "rejected": int(table["reject"].sum()) if len(table) else 0}
    print(f"Wrote {len(table)} ACE rows to {out / 'ace.csv'}")


def cmd_benchmark(args: argparse.Namespace) -> None:
    values, line_of = _load_config(args.config)
    routed = route_sections(values, {"grid": AblationGrid, "model": ModelConfig, "train": TrainConfig},
                            passthrough={"sim"})
    grid = build_model(AblationGrid, routed["grid"], _section_lines("grid", routed["grid"], line_of), prefix="grid.")
    model_config = build_model(ModelConfig, routed["model"], _section_lines("model", routed["model"], line_of),
                               prefix="model.")
    train_config = build_model(TrainConfig, routed["train"], _section_lines("train", routed["train"], line_of),
                               prefix="train.")
    sim_base = {key.split(".", 1)[1]: value for key, value in routed[""].items() if "." in key}
    jobs = args.jobs or settings.jobs

    out = _output_dir(args)
    config = {"grid": grid.model_dump(mode="json"), "sim": sim_base, "model": model_config.model_dump(),
              "train": train_config.model_dump(), "jobs": jobs}
    with run_service.track("benchmark", out, config, None, [args.config] if args.config else []) as manifest:
        results = run_ablation(grid, sim_base, model_config, train_config, jobs=jobs, line_of=line_of)
        manifest.add_output(write_frame(results, out / "results.csv"))
        n_failed = int((results["status"] != "ok").sum()) if len(results) else 0
        manifest.summary = {"rows": len(results), "failed": n_failed}
        try:
            summary = benchmark_report(results)
        except InsufficientSeeds as e:
            logger.warning(f"No benchmark summary: {e}")
        else:
            for name in ("auc", "sign_tests", "timing", "alpha_recovery", "lambda_trend"):
                filename = "summary.csv" if name == "auc" else f"{name}.csv"
                manifest.add_output(write_frame(getattr(summary, name), out / filename))
            manifest.add_output(html_report.generate(
                summary, out / "summary.html",
                data={"run_id": manifest.id, "n_rows": len(results), "n_failed": n_failed},
            ))
    print(f"Benchmark wrote {len(results)} rows to {out / 'results.csv'}")


def cmd_latent(args: argparse.Namespace) -> None:
    out = _output_dir(args)
    source = CsvDatasetSource(args.data, _parse_pair(args.pair))
    with run_service.track("latent", out, {}, None, [*source.inputs, args.checkpoint]) as manifest:
        params, graph = load_checkpoint(args.checkpoint)
        data = source.fetch()
        if data.n and data.region.max() >= params.n_regions:
            raise UnknownRegion(f"Dataset uses region {data.region.max()} but the model has {params.n_regions}")
        enc = encode(params.standardize(data.raw_X), params)
        table = unseen_region_means(params, graph)
        d = params.config.d

        frame = pd.DataFrame({"obs_id": data.obs_id, "region_id": data.region})
        for k in range(d):
            frame[f"beta_{k + 1}"] = enc.beta[:, k]
        for k in range(d):
            frame[f"kappa_{k + 1}"] = enc.kappa[:, k]
        for k in range(d):
            frame[f"mu_{k + 1}"] = table[data.region, k]
        frame[data.outcome_names[0]] = data.Y[:, 0]
        frame[data.outcome_names[1]] = data.Y[:, 1]
        manifest.add_output(write_frame(frame, out / "latent.csv"))

        regions = pd.DataFrame({"region_id": np.arange(params.n_regions), "seen": params.seen_regions})
        for k in range(d):
            regions[f"mu_{k + 1}"] = table[:, k]
        manifest.add_output(write_frame(regions, out / "region_mu.csv"))
    print(f"Wrote latent coordinates for {data.n} rows to {out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scvae",
        description="Spatial copula VAE for paired binary outcomes",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Generate a synthetic dataset")
    p.add_argument("--config", help="key=value simulation config")
    p.add_argument("--seed", type=int, help="Override the config seed")
    p.add_argument("--out", help="Output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="Fit the copula VAE")
    p.add_argument("--data", required=True, help="Dataset CSV")
    p.add_argument("--adjacency", required=True, help="Edge-list file")
    p.add_argument("--config", help="key=value model/train config")
    p.add_argument("--pair", help="Outcome columns to model, e.g. y1,y3")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="Joint, marginal and conditional probabilities")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--pair")
    p.add_argument("--samples", type=int, default=200, help="Monte Carlo draws per observation")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("ace", help="Average covariate effects with bootstrap intervals")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--spec", required=True, help="key=value covariate spec")
    p.add_argument("--pair")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ace)

    p = sub.add_parser("benchmark", help="Run the synthetic ablation grid")
    p.add_argument("--config", help="key=value grid config")
    p.add_argument("--jobs", type=int, help="Parallel worker processes")
    p.add_argument("--out")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("latent", help="Export encoder means, log-variances and region means")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--pair")
    p.add_argument("--out")
    p.set_defaults(func=cmd_latent)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ScvaeError as e:
        logger.error(f"{args.command} failed: {e}")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
