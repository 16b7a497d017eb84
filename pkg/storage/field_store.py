# storage/field_store.py
"""
Fiber field and geodesic exports.

This module provides:
- write_field / read_field_csv: one CSV per mode (mask nodes only)
- write_field_binary / read_field_binary: ``(2N+1, 2, n, n)`` little-endian
  float64 block plus a JSON sidecar
- write_path: GeodesicPath rows ``(t, x, y, theta)``
"""
import json
import logging
import re
from pathlib import Path
from typing import List

import numpy as np
import pandas as pd

from core.fiber_calculus import FiberField
from storage.models import ArtifactStore

logger = logging.getLogger(__name__)

MODE_FILE = re.compile(r"^(?P<name>.+)_mode(?P<n>[+-]\d+)\.csv$")
BINARY_LAYOUT = "mode, (re, im), ix, iy"


def mode_frame(u: FiberField, speed, n: int) -> pd.DataFrame:
    """Mask-node table of mode ``n``: ``ix, iy, x, y, re, im``."""
    grid = speed.grid
    values = speed.nodes(u.mode(n))
    return pd.DataFrame({
        "ix": grid.nodes[0],
        "iy": grid.nodes[1],
        "x": grid.node_x,
        "y": grid.node_y,
        "re": values.real,
        "im": values.imag,
    })


def write_field(store: ArtifactStore, name: str, u: FiberField, speed, binary: bool = False) -> List[Path]:
    """Write every stored mode of ``u`` (and optionally the raw block)."""
    paths = [
        store.write_frame(f"{name}_mode{n:+d}.csv", mode_frame(u, speed, n), kind="field")
        for n in range(-u.order, u.order + 1)
    ]
    if binary:
        paths.extend(write_field_binary(store, name, u, speed))
    return paths


def read_field_csv(directory: str, name: str, shape, real_flag: bool = False) -> FiberField:
    """Rebuild a FiberField from ``<name>_mode<n>.csv`` tables."""
    tables = {}
    for path in Path(directory).iterdir():
        match = MODE_FILE.match(path.name)
        if match and match.group("name") == name:
            tables[int(match.group("n"))] = pd.read_csv(path, float_precision="round_trip")
    if not tables:
        raise FileNotFoundError(f"no mode tables named {name!r} in {directory}")
    out = FiberField.zeros(tuple(shape), max(abs(n) for n in tables), real_flag)
    for n, frame in tables.items():
        grid_values = np.zeros(tuple(shape), dtype=complex)
        grid_values[frame["ix"].to_numpy(), frame["iy"].to_numpy()] = (
            frame["re"].to_numpy() + 1j * frame["im"].to_numpy()
        )
        out.set_mode(n, grid_values)
    return out


def write_field_binary(store: ArtifactStore, name: str, u: FiberField, speed) -> List[Path]:
    block = np.stack([u.modes.real, u.modes.imag], axis=1)
    data_path = store.write_array(f"{name}.f8", block)
    sidecar = {
        "file": data_path.name,
        "dtype": "<f8",
        "order": "C",
        "shape": list(block.shape),
        "layout": BINARY_LAYOUT,
        "modes": list(range(-u.order, u.order + 1)),
        "real_flag": bool(u.real_flag),
        "domain": {"radius": speed.domain.radius, "grid_n": speed.domain.grid_n},
    }
    return [data_path, store.write_json(f"{name}.json", sidecar, kind="sidecar")]


def read_field_binary(sidecar_path: str) -> FiberField:
    sidecar_path = Path(sidecar_path)
    with open(sidecar_path, "r", encoding="utf-8") as handle:
        meta = json.load(handle)
    block = np.fromfile(sidecar_path.parent / meta["file"], dtype=meta["dtype"]).reshape(meta["shape"])
    return FiberField(block[:, 0] + 1j * block[:, 1], bool(meta["real_flag"]))


def write_path(store: ArtifactStore, name: str, path) -> Path:
    """GeodesicPath as CSV rows ``t, x, y, theta``."""
    return store.write_frame(f"{name}.csv", path.to_frame(), kind="geodesic")
