"""Rendering for SourceLens.

This package contains:
- render: write-only grayscale PGM/PNG images of field modes and fan data
"""

from .render import RENDER_KINDS, render_fan, render_mode, save_gray, to_gray

__all__ = ['RENDER_KINDS', 'render_fan', 'render_mode', 'save_gray', 'to_gray']
