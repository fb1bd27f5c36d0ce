"""Two-channel sparse coordinate-list frames with exact rational values.

A frame stores per-pixel accumulation values for the positive and negative
polarity channels in COO form. Each channel is an (n, 4) int64 array with
columns (row, col, num, den): entries sorted by (row, col), duplicate-free,
zero-free, and gcd-reduced. Values are exact rationals so that averaging
merges introduce no rounding; plain event counts have den == 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import BoundsError, ShapeError, ValidationError

ROW, COL, NUM, DEN = 0, 1, 2, 3

# lcm guard: beyond this the vectorized int64 rational sum could overflow,
# so canonicalization falls back to exact Fraction arithmetic
_LCM_SAFE = 1 << 31


def _empty_channel() -> np.ndarray:
    return np.empty((0, 4), dtype=np.int64)


def _reduce(entries: np.ndarray) -> np.ndarray:
    g = np.gcd(entries[:, NUM], entries[:, DEN])
    entries[:, NUM] //= g
    entries[:, DEN] //= g
    return entries


def _canonical_channel(entries: np.ndarray, width: int, height: int) -> np.ndarray:
    """Sort by (row, col), fold duplicates with exact rational sums, drop zeros."""
    if entries.size == 0:
        return _empty_channel()
    entries = np.asarray(entries, dtype=np.int64).reshape(-1, 4)
    rows, cols = entries[:, ROW], entries[:, COL]
    if np.any(rows < 0) or np.any(rows >= height) or np.any(cols < 0) or np.any(cols >= width):
        raise BoundsError(f"channel entry outside {width}x{height} frame")
    if np.any(entries[:, DEN] <= 0):
        raise ValidationError("entry denominators must be positive")
    if np.any(entries[:, NUM] < 0):
        raise ValidationError("entry values must be non-negative")
    entries = entries[entries[:, NUM] != 0]
    if entries.size == 0:
        return _empty_channel()
    order = np.lexsort((entries[:, COL], entries[:, ROW]))
    entries = entries[order]
    flat = entries[:, ROW] * width + entries[:, COL]
    uniq, starts = np.unique(flat, return_index=True)
    if len(uniq) == len(flat):
        return _reduce(entries.copy())
    dens = entries[:, DEN]
    lcm = np.lcm.reduceat(dens, starts)
    if lcm.max() < _LCM_SAFE and np.abs(entries[:, NUM]).max() < _LCM_SAFE:
        scale = np.repeat(lcm, np.diff(np.append(starts, len(flat)))) // dens
        sums = np.add.reduceat(entries[:, NUM] * scale, starts)
        out = np.column_stack([uniq // width, uniq % width, sums, lcm])
        return _reduce(out[out[:, NUM] != 0])
    # exact fallback for extreme denominators
    acc: dict[int, Fraction] = {}
    for r, c, n, d in entries.tolist():
        key = r * width + c
        acc[key] = acc.get(key, Fraction(0)) + Fraction(n, d)
    out_rows = [
        (k // width, k % width, v.numerator, v.denominator)
        for k, v in sorted(acc.items())
        if v != 0
    ]
    return np.array(out_rows, dtype=np.int64) if out_rows else _empty_channel()


@dataclass(frozen=True, eq=False)
class SparseFrame:
    """Canonical two-channel sparse frame; immutable after construction."""

    width: int
    height: int
    t_ref_us: int
    pos: np.ndarray
    neg: np.ndarray

    def __post_init__(self):
        self.pos.flags.writeable = False
        self.neg.flags.writeable = False

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseFrame):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.t_ref_us == other.t_ref_us
            and np.array_equal(self.pos, other.pos)
            and np.array_equal(self.neg, other.neg)
        )

    @property
    def n_entries(self) -> int:
        return len(self.pos) + len(self.neg)


def empty_frame(width: int, height: int, t_ref_us: int = 0) -> SparseFrame:
    return SparseFrame(width, height, t_ref_us, _empty_channel(), _empty_channel())


_CHANNEL_ALIASES = {"pos": "pos", "+1": "pos", 1: "pos", "neg": "neg", "-1": "neg", -1: "neg"}


def from_entries(
    entries: Iterable[tuple],
    width: int,
    height: int,
    t_ref_us: int = 0,
) -> SparseFrame:
    """Build a canonical frame from (row, col, channel, value) tuples.

    ``channel`` is "pos"/"neg" or +1/-1; values are non-negative ints or
    Fractions. Duplicate coordinates are summed exactly.
    """
    pos_rows, neg_rows = [], []
    for row, col, channel, value in entries:
        ch = _CHANNEL_ALIASES.get(channel)
        if ch is None:
            raise ValidationError(f"unknown channel {channel!r}")
        frac = Fraction(value)
        if frac < 0:
            raise ValidationError(f"negative value {value} at ({row}, {col})")
        target = pos_rows if ch == "pos" else neg_rows
        target.append((row, col, frac.numerator, frac.denominator))
    pos = np.array(pos_rows, dtype=np.int64) if pos_rows else _empty_channel()
    neg = np.array(neg_rows, dtype=np.int64) if neg_rows else _empty_channel()
    return SparseFrame(
        width,
        height,
        t_ref_us,
        _canonical_channel(pos, width, height),
        _canonical_channel(neg, width, height),
    )


def counts_frame(
    width: int,
    height: int,
    t_ref_us: int,
    pos_flat: np.ndarray,
    pos_counts: np.ndarray,
    neg_flat: np.ndarray,
    neg_counts: np.ndarray,
) -> SparseFrame:
    """Fast constructor from per-channel unique sorted flat indices + counts."""

    def channel(flat, counts):
        if len(flat) == 0:
            return _empty_channel()
        return np.column_stack(
            [flat // width, flat % width, counts, np.ones(len(flat), dtype=np.int64)]
        ).astype(np.int64)

    return SparseFrame(
        width, height, t_ref_us, channel(pos_flat, pos_counts), channel(neg_flat, neg_counts)
    )


class DenseGrids(NamedTuple):
    """Exact dense view: per-channel numerator and denominator grids."""

    pos_num: np.ndarray
    pos_den: np.ndarray
    neg_num: np.ndarray
    neg_den: np.ndarray


def to_dense(frame: SparseFrame) -> DenseGrids:
    """Expand to dense (height, width) grids; empty pixels read 0/1."""
    shape = (frame.height, frame.width)
    grids = []
    for ch in (frame.pos, frame.neg):
        num = np.zeros(shape, dtype=np.int64)
        den = np.ones(shape, dtype=np.int64)
        if len(ch):
            num[ch[:, ROW], ch[:, COL]] = ch[:, NUM]
            den[ch[:, ROW], ch[:, COL]] = ch[:, DEN]
        grids.extend([num, den])
    return DenseGrids(*grids)


def to_dense_float(frame: SparseFrame) -> tuple[np.ndarray, np.ndarray]:
    g = to_dense(frame)
    return g.pos_num / g.pos_den, g.neg_num / g.neg_den


def _require_uniform_dims(frames: Sequence[SparseFrame]) -> tuple[int, int]:
    if not frames:
        raise ValidationError("need at least one frame")
    width, height = frames[0].width, frames[0].height
    for f in frames[1:]:
        if f.width != width or f.height != height:
            raise ShapeError(
                f"frame dims {f.width}x{f.height} != {width}x{height}"
            )
    return width, height


def merge_add(frames: Sequence[SparseFrame]) -> SparseFrame:
    """Pointwise rational sum of frames; t_ref is the earliest input t_ref."""
    width, height = _require_uniform_dims(frames)
    t_ref = min(f.t_ref_us for f in frames)
    pos = np.concatenate([f.pos for f in frames])
    neg = np.concatenate([f.neg for f in frames])
    return SparseFrame(
        width,
        height,
        t_ref,
        _canonical_channel(pos, width, height),
        _canonical_channel(neg, width, height),
    )


def merge_average(frames: Sequence[SparseFrame]) -> SparseFrame:
    """Pointwise mean: the add-merge divided exactly by the frame count.

    The divisor is the number of frames, including frames where a pixel is
    inactive, which keeps averaging linear with the add-merge.
    """
    total = merge_add(frames)
    k = len(frames)
    if k == 1:
        return total

    def scale(ch: np.ndarray) -> np.ndarray:
        if ch.size == 0:
            return _empty_channel()
        out = ch.copy()
        out[:, DEN] *= k
        return _reduce(out)

    return SparseFrame(total.width, total.height, total.t_ref_us, scale(total.pos), scale(total.neg))


@dataclass(frozen=True)
class BatchedFrames:
    """Ordered batch of frames sharing dimensions; inputs kept bit-identical."""

    frames: tuple[SparseFrame, ...]

    def __post_init__(self):
        _require_uniform_dims(self.frames)

    def __len__(self) -> int:
        return len(self.frames)


def concat_frames(frames: Sequence[SparseFrame]) -> BatchedFrames:
    return BatchedFrames(tuple(frames))


def active_pixel_count(frame: SparseFrame) -> int:
    """Number of distinct pixels active in either channel."""
    if len(frame.pos) == 0 and len(frame.neg) == 0:
        return 0
    flats = [ch[:, ROW] * frame.width + ch[:, COL] for ch in (frame.pos, frame.neg) if len(ch)]
    if len(flats) == 1:
        return len(flats[0])
    return len(np.union1d(flats[0], flats[1]))


def spatial_density(frame: SparseFrame) -> float:
    """Fraction of sensor pixels active in either channel (union of channels)."""
    return active_pixel_count(frame) / (frame.width * frame.height)


def frame_mass(frame: SparseFrame) -> Fraction:
    """Exact sum of all values across both channels."""
    total = Fraction(0)
    for ch in (frame.pos, frame.neg):
        for n, d in ch[:, (NUM, DEN)].tolist():
            total += Fraction(n, d)
    return total


def frame_to_dict(frame: SparseFrame) -> dict:
    return {
        "width": frame.width,
        "height": frame.height,
        "t_ref_us": frame.t_ref_us,
        "pos": frame.pos.tolist(),
        "neg": frame.neg.tolist(),
    }


def frame_from_dict(data: dict) -> SparseFrame:
    width, height = int(data["width"]), int(data["height"])

    def channel(rows):
        arr = np.array(rows, dtype=np.int64) if rows else _empty_channel()
        return _canonical_channel(arr.reshape(-1, 4), width, height)

    return SparseFrame(width, height, int(data["t_ref_us"]), channel(data["pos"]), channel(data["neg"]))


def save_frames(frames: Sequence[SparseFrame], path: str | Path) -> None:
    payload = {"frames": [frame_to_dict(f) for f in frames]}
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def load_frames(path: str | Path) -> list[SparseFrame]:
    data = json.loads(Path(path).read_text())
    return [frame_from_dict(d) for d in data["frames"]]


def frame_to_csv(frame: SparseFrame) -> str:
    """CSV triplet dump (channel,row,col,value) for plotting; values as floats."""
    lines = ["channel,row,col,value"]
    for name, ch in (("pos", frame.pos), ("neg", frame.neg)):
        for r, c, n, d in ch.tolist():
            lines.append(f"{name},{r},{c},{n / d!r}")
    return "\n".join(lines) + "\n"


def frames_to_csv(frames: Sequence[SparseFrame]) -> str:
    """Multi-frame CSV dump with a leading frame-index column."""
    lines = ["frame,channel,row,col,value"]
    for i, frame in enumerate(frames):
        for name, ch in (("pos", frame.pos), ("neg", frame.neg)):
            for r, c, n, d in ch.tolist():
                lines.append(f"{i},{name},{r},{c},{n / d!r}")
    return "\n".join(lines) + "\n"
