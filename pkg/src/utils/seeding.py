"""Named random streams derived from a single seed."""

import numpy as np

STREAMS = ("split", "init", "eps", "bootstrap", "sim", "holdout", "predict", "validation", "shuffle", "val_eps")


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for component ``name`` under ``seed``."""
    if name not in STREAMS:
        raise KeyError(f"Unknown random stream: {name}")
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(STREAMS.index(name),)))


def child(rng_seed: int, name: str, index: int) -> np.random.Generator:
    """Generator for replicate ``index`` of stream ``name``."""
    return np.random.default_rng(
        np.random.SeedSequence(rng_seed, spawn_key=(STREAMS.index(name), index))
    )
