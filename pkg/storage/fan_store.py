# storage/fan_store.py
"""Boundary fan exports: one CSV row per Gamma entry."""
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from core.transport import BoundaryFan
from storage.models import ArtifactStore

logger = logging.getLogger(__name__)

FAN_COLUMNS = ["arc_index", "dir_index", "s", "phi", "theta_in", "mu", "tau", "weight", "re", "im"]


def fan_frame(fan: BoundaryFan) -> pd.DataFrame:
    frame = fan.to_frame()
    frame.insert(0, "arc_index", fan.arc_index)
    frame.insert(1, "dir_index", fan.dir_index)
    frame.insert(3, "phi", fan.phi)
    frame.insert(7, "weight", fan.weight)
    return frame[FAN_COLUMNS]


def write_fan(store: ArtifactStore, name: str, fan: BoundaryFan) -> Path:
    return store.write_frame(f"{name}.csv", fan_frame(fan), kind="fan")


def read_fan(path: str, radius: float, side: str = "+") -> BoundaryFan:
    """Rebuild a BoundaryFan from its CSV export."""
    frame = pd.read_csv(path, float_precision="round_trip")
    missing = [c for c in FAN_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"fan table {path} lacks columns {missing}")
    return BoundaryFan(
        side=side,
        radius=float(radius),
        arc_index=frame["arc_index"].to_numpy(),
        dir_index=frame["dir_index"].to_numpy(),
        phi=frame["phi"].to_numpy(),
        theta=frame["theta_in"].to_numpy(),
        mu=frame["mu"].to_numpy(),
        tau=frame["tau"].to_numpy(),
        weight=frame["weight"].to_numpy(),
        value=frame["re"].to_numpy() + 1j * frame["im"].to_numpy(),
    )
