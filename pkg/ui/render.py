# ui/render.py
"""
Grayscale bitmaps of fields and boundary data.

Write-only renderings for quick inspection: |mode|, arg(mode) and fan
magnitudes, saved as PGM or PNG depending on the file suffix.
"""
import logging
from pathlib import Path
from typing import Optional

import numpy as np

from core.fiber_calculus import FiberField
from core.transport import BoundaryFan

logger = logging.getLogger(__name__)

# Lazy import for the imaging library
_Image = None

RENDER_KINDS = ("abs", "arg")
SUFFIX_FORMATS = {".pgm": "PPM", ".png": "PNG"}


def _get_image():
    """Lazy load PIL.Image"""
    global _Image
    if _Image is None:
        from PIL import Image
        _Image = Image
    return _Image


def to_gray(values: np.ndarray, kind: str = "abs", mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Map a complex grid to uint8: magnitude scaled by its max, or phase over [-pi, pi].

    Entries outside ``mask`` are black.
    """
    if kind not in RENDER_KINDS:
        raise ValueError(f"kind must be one of {RENDER_KINDS}, got {kind!r}")
    values = np.asarray(values)
    mask = np.ones(values.shape, dtype=bool) if mask is None else mask
    if kind == "abs":
        magnitude = np.abs(values)
        peak = float(np.max(magnitude[mask])) if mask.any() else 0.0
        scaled = magnitude / peak if peak > 0 else np.zeros(values.shape)
    else:
        scaled = (np.angle(values) + np.pi) / (2.0 * np.pi)
    gray = np.clip(np.rint(255.0 * scaled), 0, 255).astype(np.uint8)
    return np.where(mask, gray, 0).astype(np.uint8)


def save_gray(pixels: np.ndarray, path: str) -> Path:
    path = Path(path)
    fmt = SUFFIX_FORMATS.get(path.suffix.lower())
    if fmt is None:
        raise ValueError(f"unsupported image suffix {path.suffix!r}; use .pgm or .png")
    Image = _get_image()
    Image.fromarray(np.ascontiguousarray(pixels), mode="L").save(path, format=fmt)
    logger.debug("Rendered %s (%dx%d)", path, pixels.shape[1], pixels.shape[0])
    return path


def render_mode(u: FiberField, n: int, speed, path: str, kind: str = "abs") -> Path:
    """Render mode ``n`` of ``u`` with y pointing up."""
    gray = to_gray(u.mode(n), kind, speed.grid.mask)
    return save_gray(gray[:, ::-1].T, path)


def render_fan(fan: BoundaryFan, path: str, kind: str = "abs") -> Path:
    """Render fan values on the (direction row, arc column) index plane."""
    rows = int(fan.dir_index.max()) + 1 if fan.size else 1
    cols = int(fan.arc_index.max()) + 1 if fan.size else 1
    plane = np.zeros((rows, cols), dtype=complex)
    mask = np.zeros((rows, cols), dtype=bool)
    plane[fan.dir_index, fan.arc_index] = fan.value
    mask[fan.dir_index, fan.arc_index] = True
    return save_gray(to_gray(plane, kind, mask), path)
