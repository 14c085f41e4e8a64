"""Posterior-to-event decoding.

Per-epoch posteriors become hypothesis events through a fixed pipeline:
median smoothing, strict thresholding (p > theta), merging positive runs
separated by at most merge_gap seconds, then dropping events shorter than
min_duration. Lowering theta can only grow the binarized mask, which keeps
threshold sweeps monotone at the epoch level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.ndimage

from .edf import EventList
from .errors import ConfigError, DataError

EPOCH_SECONDS = 1.0
DEFAULT_LABEL = "seiz"


@dataclass(frozen=True)
class PostprocessConfig:
    threshold: float = 0.5
    smoothing: int = 3
    min_duration: float = 3.0
    merge_gap: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(f"threshold must be in [0,1], got {self.threshold}")
        if self.smoothing < 1 or self.smoothing % 2 == 0:
            raise ConfigError(f"smoothing width must be odd >= 1, got {self.smoothing}")
        if self.min_duration < 0:
            raise ConfigError(f"min_duration must be >= 0, got {self.min_duration}")
        if self.merge_gap < 0:
            raise ConfigError(f"merge_gap must be >= 0, got {self.merge_gap}")


def smooth_posteriors(posteriors: np.ndarray, cfg: PostprocessConfig) -> np.ndarray:
    p = np.asarray(posteriors, dtype=np.float64)
    if p.ndim != 1:
        raise DataError(f"posteriors must be 1-D, got {p.ndim}-D")
    if p.size == 0:
        raise DataError("empty posteriors")
    if cfg.smoothing == 1:
        return p
    return scipy.ndimage.median_filter(p, size=cfg.smoothing, mode="nearest")


def binarize(posteriors: np.ndarray, threshold: float) -> np.ndarray:
    return np.asarray(posteriors) > threshold


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """[start, stop) epoch index pairs of contiguous True runs."""
    out = []
    start = None
    for i, v in enumerate(mask):
        if v and start is None:
            start = i
        elif not v and start is not None:
            out.append((start, i))
            start = None
    if start is not None:
        out.append((start, len(mask)))
    return out


def merge_events(intervals: list[tuple[float, float]], merge_gap: float) -> list[tuple[float, float]]:
    """Fuse consecutive intervals whose gap is <= merge_gap seconds."""
    merged: list[list[float]] = []
    for start, stop in intervals:
        if merged and start - merged[-1][1] <= merge_gap:
            merged[-1][1] = max(merged[-1][1], stop)
        else:
            merged.append([start, stop])
    return [(a, b) for a, b in merged]


def to_events(posteriors: np.ndarray, cfg: PostprocessConfig,
              label: str = DEFAULT_LABEL) -> EventList:
    """Decode one recording's posteriors into a hypothesis EventList."""
    smoothed = smooth_posteriors(posteriors, cfg)
    mask = binarize(smoothed, cfg.threshold)
    intervals = [
        (a * EPOCH_SECONDS, b * EPOCH_SECONDS) for a, b in _runs(mask)
    ]
    intervals = merge_events(intervals, cfg.merge_gap)
    kept = [(a, b) for a, b in intervals if b - a >= cfg.min_duration]
    total = len(smoothed) * EPOCH_SECONDS
    return EventList(tuple((a, b, label) for a, b in kept), total)
