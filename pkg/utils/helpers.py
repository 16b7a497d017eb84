"""Helper functions for progress reporting, seeding and error norms"""
import logging
import time
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)

# Seconds between two progress log lines
PROGRESS_LOG_INTERVAL = 5.0


class ProgressTracker:
    """Context manager for tracking progress of long-running sweeps.

    Progress is reported through logging, throttled to one line every
    ``PROGRESS_LOG_INTERVAL`` seconds plus the final step.

    Example:
        with ProgressTracker("Tracing rays", total_steps=10) as tracker:
            for i in range(10):
                # Do work...
                tracker.update(i + 1)
    """

    def __init__(self, description="Processing", total_steps=100, show_progress=True):
        self.description = description
        self.total_steps = max(int(total_steps), 1)
        self.show_progress = show_progress
        self.current_step = 0
        self._start_time = None
        self._last_update = 0.0

    def __enter__(self):
        self._start_time = time.time()
        self._last_update = self._start_time
        if self.show_progress:
            logger.debug("⏳ %s...", self.description)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if self.show_progress and exc_type is None:
            logger.debug("✅ %s done in %.2fs", self.description, self.elapsed)
        return False

    @property
    def elapsed(self) -> float:
        if self._start_time is None:
            return 0.0
        return time.time() - self._start_time

    def update(self, step=None, message=None):
        """Advance the tracker and log if the throttle interval has passed."""
        if step is not None:
            self.current_step = step
        else:
            self.current_step += 1

        progress = min(self.current_step / self.total_steps, 1.0)
        now = time.time()
        if now - self._last_update >= PROGRESS_LOG_INTERVAL or self.current_step >= self.total_steps:
            if self.show_progress:
                logger.info(message or f"⏳ {self.description}... ({int(progress * 100)}%)")
            self._last_update = now


def get_rng(seed: Optional[int] = None) -> np.random.Generator:
    """Seeded generator; every random fixture goes through here."""
    return np.random.default_rng(seed)


def relative_error(estimate, truth, weights=None) -> float:
    """Weighted relative L2 error ``|estimate - truth| / |truth|``.

    Returns the absolute error when ``truth`` vanishes.
    """
    estimate = np.asarray(estimate)
    truth = np.asarray(truth)
    if weights is None:
        weights = np.ones(truth.shape)
    diff = float(np.sqrt(np.sum(weights * np.abs(estimate - truth) ** 2)))
    scale = float(np.sqrt(np.sum(weights * np.abs(truth) ** 2)))
    if scale == 0.0:
        return diff
    return diff / scale
