"""Model checkpoints as a single ``.npz`` archive.

Tensors are stored as float64 arrays; configuration and scalars travel in a
JSON string so the archive loads without pickle and round-trips bit-exactly.
"""

import json
import logging
from pathlib import Path

import numpy as np

from src import __version__
from src.errors import CheckpointError
from src.services.scvae_model import ModelConfig, ModelParams
from src.services.spatial_graph import SpatialGraph

logger = logging.getLogger(__name__)

FORMAT = "scvae-checkpoint"
FORMAT_VERSION = 1
TENSOR_PREFIX = "tensor."


def save_checkpoint(path: str | Path, params: ModelParams, graph: SpatialGraph) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        "package_version": __version__,
        "config": params.config.model_dump(),
        "recon_weight": params.recon_weight,
        "seed": params.seed,
        "feature_names": params.feature_names,
        "tensor_names": list(params.tensors),
        "rho": graph.rho,
        "n_regions": graph.L,
    }
    arrays = {f"{TENSOR_PREFIX}{name}": np.asarray(t, dtype=np.float64) for name, t in params.tensors.items()}
    with path.open("wb") as f:
        np.savez(
            f,
            meta=np.array(json.dumps(meta)),
            x_mean=params.x_mean,
            x_scale=params.x_scale,
            seen_regions=params.seen_regions,
            graph_edges=graph.edge_array,
            **arrays,
        )
    logger.info(f"Saved checkpoint with {len(arrays)} tensors to {path}")
    return path


def load_checkpoint(path: str | Path) -> tuple[ModelParams, SpatialGraph]:
    """Inverse of ``save_checkpoint``."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as archive:
            contents = {key: archive[key] for key in archive.files}
    except (OSError, ValueError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e

    for key in ("meta", "x_mean", "x_scale", "seen_regions", "graph_edges"):
        if key not in contents:
            raise CheckpointError(f"checkpoint {path} has no '{key}' entry")
    meta = json.loads(str(contents["meta"]))
    if meta.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not a model checkpoint")
    if meta.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {meta.get('format_version')}")

    tensors = {}
    for name in meta["tensor_names"]:
        key = f"{TENSOR_PREFIX}{name}"
        if key not in contents:
            raise CheckpointError(f"checkpoint {path} is missing tensor '{name}'")
        tensors[name] = contents[key]

    params = ModelParams(
        config=ModelConfig.model_validate(meta["config"]),
        tensors=tensors,
        recon_weight=meta["recon_weight"],
        seen_regions=contents["seen_regions"].astype(bool),
        x_mean=contents["x_mean"],
        x_scale=contents["x_scale"],
        feature_names=list(meta["feature_names"]),
        seed=meta["seed"],
    )
    edges = tuple((int(i), int(j)) for i, j in contents["graph_edges"])
    graph = SpatialGraph(meta["n_regions"], edges, meta["rho"])
    logger.info(f"Loaded checkpoint {path}: p={params.config.p}, d={params.config.d}, L={graph.L}")
    return params, graph
