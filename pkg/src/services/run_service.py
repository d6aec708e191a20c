"""Run bookkeeping: one manifest per command invocation."""

import hashlib
import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Iterator

from src import __version__
from src.config import settings

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class RunStatus(str, Enum):
    """Status of a run."""
    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


def file_digest(path: str | Path) -> str:
    """SHA-256 of a file's bytes."""
    h = hashlib.sha256()
    with Path(path).open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """What a command read, wrote and was configured with."""
    id: str
    command: str
    status: RunStatus
    output_dir: str
    created_at: datetime
    config: dict[str, Any] = field(default_factory=dict)
    seed: int | None = None
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    completed_at: datetime | None = None
    seconds: float | None = None
    error: str | None = None
    summary: dict[str, Any] = field(default_factory=dict)
    version: str = __version__

    def add_output(self, path: str | Path) -> None:
        path = Path(path)
        self.outputs[str(path)] = file_digest(path)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "command": self.command,
            "status": self.status.value,
            "output_dir": self.output_dir,
            "created_at": self.created_at.isoformat(),
            "completed_at": self.completed_at.isoformat() if self.completed_at else None,
            "seconds": self.seconds,
            "seed": self.seed,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "summary": self.summary,
            "error": self.error,
            "version": self.version,
        }


class RunService:
    """Creates manifests, times commands and writes ``manifest.json``."""

    def __init__(self):
        self._runs: dict[str, RunManifest] = {}
        self._run_counter = 0

    @property
    def runs(self) -> list[dict[str, Any]]:
        return [r.to_dict() for r in sorted(self._runs.values(), key=lambda r: r.created_at, reverse=True)]

    def get_run(self, run_id: str) -> RunManifest | None:
        return self._runs.get(run_id)

    def default_output_dir(self, command: str) -> Path:
        return Path(settings.runs_dir) / f"{command}-{datetime.now().strftime('%Y%m%d_%H%M%S')}"

    def start(self, command: str, output_dir: str | Path, config: dict[str, Any] | None = None,
              seed: int | None = None, inputs: list[str | Path] | None = None) -> RunManifest:
        self._run_counter += 1
        run_id = f"RUN-{self._run_counter:04d}"
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        manifest = RunManifest(
            id=run_id,
            command=command,
            status=RunStatus.RUNNING,
            output_dir=str(output_dir),
            created_at=datetime.now(),
            config=config or {},
            seed=seed,
            inputs={str(p): file_digest(p) for p in (inputs or []) if Path(p).is_file()},
        )
        self._runs[run_id] = manifest
        logger.info(f"Started {command} ({run_id}) -> {output_dir}")
        return manifest

    def write(self, manifest: RunManifest) -> Path:
        path = Path(manifest.output_dir) / MANIFEST_NAME
        path.write_text(json.dumps(manifest.to_dict(), indent=2, default=str) + "\n", encoding="utf-8")
        return path

    @contextmanager
    def track(self, command: str, output_dir: str | Path, config: dict[str, Any] | None = None,
              seed: int | None = None, inputs: list[str | Path] | None = None) -> Iterator[RunManifest]:
        """Run the body, then record status, timing and outputs; failures are re-raised."""
        manifest = self.start(command, output_dir, config, seed, inputs)
        started = time.perf_counter()
        try:
            yield manifest
        except Exception as e:
            manifest.status = RunStatus.FAILED
            manifest.error = str(e)
            logger.error(f"{command} ({manifest.id}) failed: {e}")
            raise
        else:
            manifest.status = RunStatus.COMPLETED
            logger.info(f"{command} ({manifest.id}) completed with {len(manifest.outputs)} output files")
        finally:
            manifest.completed_at = datetime.now()
            manifest.seconds = time.perf_counter() - started
            self.write(manifest)


# Singleton instance
run_service = RunService()
