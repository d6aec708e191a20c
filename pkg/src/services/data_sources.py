"""Dataset, adjacency and ground-truth files, and the sources commands load data from."""

import json
import logging
import re
from abc import ABC, abstractmethod
from pathlib import Path

import numpy as np
import pandas as pd

from src.config import settings
from src.errors import SchemaError
from src.services.dataset import Dataset
from src.services.spatial_graph import DEFAULT_RHO, SpatialGraph

logger = logging.getLogger(__name__)

REGION_COLUMN = "region_id"
OUTCOME_PATTERN = re.compile(r"^y\d+$")


def write_frame(frame: pd.DataFrame, path: str | Path) -> Path:
    """CSV with enough digits to read every float back exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=settings.float_format, lineterminator="\n")
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def _line_of(position: int) -> int:
    # header is line 1
    return position + 2


def read_dataset(path: str | Path, pair: tuple[str, str] | None = None) -> Dataset:
    """Read ``region_id,y1,y2,<features...>``; extra ``y<k>`` columns are further outcomes.

    ``pair`` picks the two outcome columns to model (default: the first two).
    Row numbers in errors are file line numbers.
    """
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"dataset file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise SchemaError(f"malformed CSV: {e}", row=int(match.group(1)) if match else None) from e
    except pd.errors.EmptyDataError as e:
        raise SchemaError(f"dataset file is empty: {path}") from e

    columns = [c.strip() for c in frame.columns]
    frame.columns = columns
    if REGION_COLUMN not in columns:
        raise SchemaError(f"missing column '{REGION_COLUMN}'")
    outcomes = [c for c in columns if OUTCOME_PATTERN.match(c)]
    if pair is None:
        if len(outcomes) < 2:
            raise SchemaError(f"need at least two outcome columns y1, y2; found {outcomes}")
        pair = (outcomes[0], outcomes[1])
    for name in pair:
        if name not in outcomes:
            raise SchemaError(f"outcome column '{name}' not in {outcomes}")
    features = [c for c in columns if c != REGION_COLUMN and c not in outcomes]
    if not features:
        raise SchemaError("dataset has no covariate columns")

    numeric = {}
    for column in [REGION_COLUMN, *pair, *features]:
        values = pd.to_numeric(frame[column].str.strip(), errors="coerce")
        bad = np.flatnonzero(values.isna().to_numpy())
        if bad.size:
            raw = frame[column].iloc[bad[0]]
            raise SchemaError(f"column '{column}' has non-numeric or missing value '{raw}'", row=_line_of(bad[0]))
        numeric[column] = frame[column].str.strip().to_numpy(dtype=str).astype(float)

    region = numeric[REGION_COLUMN]
    bad = np.flatnonzero((region < 0) | (region != np.floor(region)))
    if bad.size:
        raise SchemaError(f"region_id must be a non-negative integer, got {region[bad[0]]}", row=_line_of(bad[0]))
    for name in pair:
        bad = np.flatnonzero(~np.isin(numeric[name], (0.0, 1.0)))
        if bad.size:
            raise SchemaError(f"outcome '{name}' must be 0 or 1, got {numeric[name][bad[0]]}", row=_line_of(bad[0]))

    data = Dataset(
        X=np.column_stack([numeric[c] for c in features]),
        Y=np.column_stack([numeric[pair[0]], numeric[pair[1]]]).astype(np.int64),
        region=region.astype(np.int64),
        feature_names=features,
        outcome_names=(pair[0], pair[1]),
    )
    logger.info(f"Read {data.n} rows, {data.p} covariates, outcomes {pair} from {path}")
    return data


def dataset_frame(data: Dataset) -> pd.DataFrame:
    frame = pd.DataFrame({REGION_COLUMN: data.region})
    frame[data.outcome_names[0]] = data.Y[:, 0]
    frame[data.outcome_names[1]] = data.Y[:, 1]
    raw = data.raw_X
    for k, name in enumerate(data.feature_names):
        frame[name] = raw[:, k]
    return frame


def write_dataset(data: Dataset, path: str | Path) -> Path:
    return write_frame(dataset_frame(data), path)


def read_adjacency(path: str | Path, rho: float = DEFAULT_RHO, n_regions: int | None = None) -> SpatialGraph:
    """Edge list: one ``i j`` pair per line, ``#`` comments, optional ``L=<int>`` header.

    Without a header the region count is the largest index plus one (or
    ``n_regions`` when larger). Both orientations of an edge count once.
    """
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"adjacency file not found: {path}")
    declared = None
    edges: set[tuple[int, int]] = set()
    for number, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        if text.replace(" ", "").startswith("L="):
            try:
                declared = int(text.split("=", 1)[1])
            except ValueError as e:
                raise SchemaError(f"bad region count header '{text}'", row=number) from e
            continue
        parts = text.split()
        if len(parts) != 2:
            raise SchemaError(f"expected two region indices, got '{text}'", row=number)
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError as e:
            raise SchemaError(f"region indices must be integers, got '{text}'", row=number) from e
        if i < 0 or j < 0:
            raise SchemaError(f"negative region index in '{text}'", row=number)
        if i == j:
            raise SchemaError(f"self-loop on region {i}", row=number)
        if declared is not None and max(i, j) >= declared:
            raise SchemaError(f"edge ({i}, {j}) outside L={declared}", row=number)
        edges.add((min(i, j), max(i, j)))

    inferred = max((j for _, j in edges), default=-1) + 1
    L = declared if declared is not None else max(inferred, n_regions or 0)
    graph = SpatialGraph(L, tuple(sorted(edges)), rho)
    logger.info(f"Read adjacency with L={graph.L} and {len(graph.edges)} edges from {path}")
    return graph


def write_adjacency(graph: SpatialGraph, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"L={graph.L}", *(f"{i} {j}" for i, j in graph.edges)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_ground_truth(truth, data: Dataset, out_dir: str | Path) -> list[Path]:
    """``ground_truth.csv`` plus ``coefficients.json``."""
    out_dir = Path(out_dir)
    csv_path = write_frame(truth.to_frame(data.obs_id, data.region), out_dir / "ground_truth.csv")
    json_path = out_dir / "coefficients.json"
    json_path.write_text(json.dumps(truth.coefficients_dict(), indent=2) + "\n", encoding="utf-8")
    return [csv_path, json_path]


class DatasetSource(ABC):
    """Where a command gets its dataset from."""

    @abstractmethod
    def fetch(self) -> Dataset:
        """Load the dataset."""
        pass

    @property
    @abstractmethod
    def inputs(self) -> list[Path]:
        """Files read, for the run manifest."""


class CsvDatasetSource(DatasetSource):
    """Dataset CSV on disk."""

    def __init__(self, path: str | Path, pair: tuple[str, str] | None = None):
        self.path = Path(path)
        self.pair = pair

    def fetch(self) -> Dataset:
        return read_dataset(self.path, self.pair)

    @property
    def inputs(self) -> list[Path]:
        return [self.path]

