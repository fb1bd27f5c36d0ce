"""Independent reference implementations used to check the library.

Everything here is deliberately brute-force: dense grids, per-event Python
loops, exact Fraction arithmetic. None of it shares code with the package
paths under test.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from dvskit.frames import SparseFrame, to_dense


def filter_window(events: np.ndarray, t_start: int, t_end: int) -> list[list[int]]:
    """Linear-scan window filter over (t, x, y, p) rows."""
    return [row for row in events.tolist() if t_start <= row[0] < t_end]


def rational_bin_index(t: int, t_start: int, t_end: int, n_bins: int) -> int:
    """floor((t - Tstart) / biS) with biS = (Tend - Tstart) / n_bins, exact."""
    bis = Fraction(t_end - t_start, n_bins)
    idx = math.floor(Fraction(t - t_start) / bis)
    return min(idx, n_bins - 1)


def dense_binned_counts(
    events: np.ndarray, t_start: int, t_end: int, n_bins: int, width: int, height: int
) -> np.ndarray:
    """Dense scatter-add oracle: (n_bins, 2, height, width) count grid.

    Channel 0 counts +1 events, channel 1 counts -1 events; bins come from
    the exact-rational index above, one event at a time.
    """
    grid = np.zeros((n_bins, 2, height, width), dtype=np.int64)
    for t, x, y, p in events.tolist():
        b = rational_bin_index(t, t_start, t_end, n_bins)
        grid[b, 0 if p == 1 else 1, y, x] += 1
    return grid


def dense_scatter(entries, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Dense Fraction grids from (row, col, channel, value) tuples."""
    pos = np.full((height, width), Fraction(0), dtype=object)
    neg = np.full((height, width), Fraction(0), dtype=object)
    for row, col, channel, value in entries:
        target = pos if channel in ("pos", 1, "+1") else neg
        target[row, col] += Fraction(value)
    return pos, neg


def dense_fraction_view(frame: SparseFrame) -> tuple[np.ndarray, np.ndarray]:
    """Exact Fraction grids of a frame, via its dense num/den expansion."""
    g = to_dense(frame)
    pos = np.array(
        [[Fraction(int(n), int(d)) for n, d in zip(nr, dr)] for nr, dr in zip(g.pos_num, g.pos_den)],
        dtype=object,
    )
    neg = np.array(
        [[Fraction(int(n), int(d)) for n, d in zip(nr, dr)] for nr, dr in zip(g.neg_num, g.neg_den)],
        dtype=object,
    )
    return pos, neg


def random_frame(
    rng: np.random.Generator,
    width: int,
    height: int,
    max_entries: int = 30,
    t_ref: int | None = None,
    rational: bool = False,
) -> tuple[SparseFrame, list[tuple]]:
    """Random canonicalizable entry list and the frame built from it."""
    from dvskit.frames import from_entries

    n = int(rng.integers(0, max_entries + 1))
    entries = []
    for _ in range(n):
        row = int(rng.integers(0, height))
        col = int(rng.integers(0, width))
        channel = "pos" if rng.random() < 0.5 else "neg"
        if rational:
            value = Fraction(int(rng.integers(0, 6)), int(rng.integers(1, 5)))
        else:
            value = int(rng.integers(0, 6))
        entries.append((row, col, channel, value))
    t = int(rng.integers(0, 1_000_000)) if t_ref is None else t_ref
    return from_entries(entries, width, height, t_ref_us=t), entries
