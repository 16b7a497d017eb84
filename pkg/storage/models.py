# storage/models.py
"""
Run directories and manifests.

This module provides:
- ArtifactStore: one output directory per run, with a ``run()`` context
  manager that writes ``manifest.json`` whether the run succeeds or fails
- to_jsonable: conversion of numpy / pandas values for JSON documents

Storage Structure:
    <out>/
    ├── manifest.json        # effective config, status, artifacts, results
    ├── <name>_mode+0.csv    # per-mode field tables (field_store)
    ├── <name>.f8 / .json    # optional raw float64 block + sidecar
    └── <name>_fan.csv       # boundary data (fan_store)
"""
import hashlib
import json
import logging
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def to_jsonable(value: Any) -> Any:
    """Recursively convert numpy scalars/arrays, DataFrames and paths to JSON types."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, pd.DataFrame):
        return to_jsonable(value.to_dict(orient="records"))
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


class ArtifactStore:
    """Output directory manager.

    Every file written through the store is listed in the manifest with its
    SHA-256, so identical runs can be compared byte for byte.
    """

    def __init__(self, root: str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.artifacts: List[Dict[str, str]] = []
        self.results: Dict[str, Any] = {}

    def path(self, name: str) -> Path:
        return self.root / name

    def register(self, path: Path, kind: str) -> Path:
        self.artifacts.append({"name": path.name, "kind": kind})
        logger.debug("Wrote %s (%s)", path, kind)
        return path

    def record(self, key: str, value: Any) -> None:
        """Attach a result to the manifest's ``results`` section."""
        self.results[key] = to_jsonable(value)

    # ------------------------------------------------------------------
    # Writers
    # ------------------------------------------------------------------

    def write_frame(self, name: str, frame: pd.DataFrame, kind: str = "table") -> Path:
        """CSV with pandas' default float formatting (shortest round-trip decimal)."""
        path = self.path(name)
        frame.to_csv(path, index=False, lineterminator="\n")
        return self.register(path, kind)

    def write_json(self, name: str, payload: Any, kind: str = "json") -> Path:
        path = self.path(name)
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(to_jsonable(payload), handle, indent=2, sort_keys=True)
            handle.write("\n")
        return self.register(path, kind)

    def write_array(self, name: str, array: np.ndarray, kind: str = "binary") -> Path:
        """Raw little-endian float64 block in C order."""
        path = self.path(name)
        np.ascontiguousarray(array, dtype="<f8").tofile(path)
        return self.register(path, kind)

    # ------------------------------------------------------------------
    # Manifest
    # ------------------------------------------------------------------

    def write_manifest(self, subcommand: str, config: Dict[str, Any], status: str,
                       error: Optional[str] = None, started: Optional[str] = None) -> Path:
        artifacts = []
        for item in self.artifacts:
            path = self.path(item["name"])
            entry = dict(item)
            if path.exists():
                entry["sha256"] = _sha256(path)
            artifacts.append(entry)
        manifest = {
            "subcommand": subcommand,
            "status": status,
            "error": error,
            "started": started,
            "finished": datetime.now(timezone.utc).isoformat(),
            "config": config,
            "artifacts": artifacts,
            "results": self.results,
            "versions": {"numpy": np.__version__, "pandas": pd.__version__},
        }
        path = self.path(MANIFEST_NAME)
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(to_jsonable(manifest), handle, indent=2, sort_keys=True)
            handle.write("\n")
        return path

    @contextmanager
    def run(self, subcommand: str, config: Dict[str, Any]):
        """Context manager for one CLI run; the manifest is written on success and failure."""
        started = datetime.now(timezone.utc).isoformat()
        try:
            yield self
        except BaseException as exc:
            self.write_manifest(subcommand, config, "failed", f"{type(exc).__name__}: {exc}", started)
            raise
        self.write_manifest(subcommand, config, "ok", None, started)


def load_manifest(root: str) -> Dict[str, Any]:
    with open(Path(root) / MANIFEST_NAME, "r", encoding="utf-8") as handle:
        return json.load(handle)
