"""Window-to-sparse-frame conversion via uniform temporal event bins.

A window [Tstart, Tend) is split into n_bins equal slices; every event lands
in bin floor((t - Tstart) / biS) with biS = (Tend - Tstart) / n_bins. The
index is evaluated as floor((t - Tstart) * n_bins / (Tend - Tstart)) in
integer arithmetic, which is algebraically identical over the rationals and
free of floating-point drift when n_bins does not divide the window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundsError, ValidationError
from .events import COL_P, COL_T, COL_X, COL_Y, EventWindow
from .frames import SparseFrame, counts_frame

__all__ = ["BinningSpec", "bin_index", "to_sparse_frames"]


@dataclass(frozen=True)
class BinningSpec:
    """Bin count and sensor dimensions for the converter."""

    n_bins: int
    width: int
    height: int

    def __post_init__(self):
        if self.n_bins < 1:
            raise ValidationError("n_bins must be >= 1")
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("sensor dimensions must be positive")


def bin_index(t_us: int, t_start_us: int, t_end_us: int, n_bins: int) -> int:
    """Bin index of a timestamp inside [t_start, t_end), clamped to n_bins - 1."""
    if not t_start_us <= t_us < t_end_us:
        raise ValidationError(
            f"timestamp {t_us} outside window [{t_start_us}, {t_end_us})"
        )
    idx = (t_us - t_start_us) * n_bins // (t_end_us - t_start_us)
    return min(idx, n_bins - 1)


def to_sparse_frames(window: EventWindow, spec: BinningSpec) -> list[SparseFrame]:
    """Convert a window into exactly n_bins two-channel count frames.

    Frame i accumulates, per pixel, the +1 events (pos channel) and -1 events
    (neg channel) whose bin index is i; (row, col) = (y, x). Empty bins yield
    empty frames with t_ref at the bin start; non-empty bins use the earliest
    contributing event time.
    """
    events = window.events
    t0, t1 = window.t_start_us, window.t_end_us
    span = t1 - t0
    n_bins = spec.n_bins
    if len(events):
        xs, ys = events[:, COL_X], events[:, COL_Y]
        if xs.max() >= spec.width or ys.max() >= spec.height:
            raise BoundsError(f"event outside {spec.width}x{spec.height} sensor")
        bins = np.minimum((events[:, COL_T] - t0) * n_bins // span, n_bins - 1)
    else:
        bins = np.empty(0, dtype=np.int64)

    frames = []
    for i in range(n_bins):
        # events are time-sorted, so each bin is a contiguous slice
        lo = int(np.searchsorted(bins, i, side="left"))
        hi = int(np.searchsorted(bins, i, side="right"))
        sub = events[lo:hi]
        if len(sub):
            t_ref = int(sub[0, COL_T])
            flat = sub[:, COL_Y] * spec.width + sub[:, COL_X]
            is_pos = sub[:, COL_P] == 1
            pos_flat, pos_counts = np.unique(flat[is_pos], return_counts=True)
            neg_flat, neg_counts = np.unique(flat[~is_pos], return_counts=True)
        else:
            t_ref = t0 + i * span // n_bins
            pos_flat = pos_counts = neg_flat = neg_counts = np.empty(0, dtype=np.int64)
        frames.append(
            counts_frame(spec.width, spec.height, t_ref, pos_flat, pos_counts, neg_flat, neg_counts)
        )
    return frames
