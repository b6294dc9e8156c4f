"""Blink-shaped missing-data handling: detection, statistics, injection.

Detection covers every maximal missing run, extends events over the sharp
artifact flanks until the local slope stabilizes, and merges events in close
proximity. Injection draws blink count, duration and start position from
empirical multisets (with replacement), reproducing the missingness pattern
of real recordings rather than uniform random dropout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Dataset, GazeSequence, MissingMask

__all__ = [
    "BlinkEvent",
    "BlinkStats",
    "detect_blinks",
    "blink_statistics",
    "inject_blinks",
    "large_gap_inject",
    "reference_stats",
]

SLOPE_THRESH_DEFAULT = 0.5  # deg/sample
STABLE_RUN_DEFAULT = 5  # samples
MERGE_GAP_DEFAULT = 50  # samples


@dataclass(frozen=True)
class BlinkEvent:
    onset: int  # first sample of the event
    offset: int  # one past the last sample
    source: str = "detected"  # 'detected' | 'artificial'

    def __post_init__(self):
        if not (0 <= self.onset < self.offset):
            raise ValueError(f"need 0 <= onset < offset, got [{self.onset}, {self.offset})")
        if self.source not in ("detected", "artificial"):
            raise ValueError(f"unknown source {self.source!r}")

    @property
    def duration(self) -> int:
        return self.offset - self.onset


@dataclass(frozen=True)
class BlinkStats:
    """Empirical multisets of blink duration, start position and per-sequence count."""

    durations: np.ndarray
    positions: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        for name in ("durations", "positions", "counts"):
            arr = np.array(getattr(self, name), dtype=np.int64, copy=True)
            if arr.ndim != 1:
                raise ValueError(f"{name} must be 1-D")
            if arr.size and arr.min() < 0:
                raise ValueError(f"{name} entries must be nonnegative")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.durations.size and self.durations.min() < 1:
            raise ValueError("durations entries must be >= 1")

    def is_empty(self) -> bool:
        return self.counts.size == 0

    def scaled(self, divisor: int) -> "BlinkStats":
        """Map durations/positions onto a grid coarser by ``divisor``."""
        if divisor < 1:
            raise ValueError("divisor must be >= 1")
        return BlinkStats(
            np.maximum(self.durations // divisor, 1),
            self.positions // divisor,
            self.counts,
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "durations": self.durations.tolist(),
                "positions": self.positions.tolist(),
                "counts": self.counts.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "BlinkStats":
        d = json.loads(text)
        return cls(d["durations"], d["positions"], d["counts"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "BlinkStats":
        return cls.from_json(Path(path).read_text())


def _missing_runs(missing: np.ndarray) -> list[tuple[int, int]]:
    if not missing.any():
        return []
    padded = np.concatenate(([False], missing, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return [(int(edges[i]), int(edges[i + 1])) for i in range(0, edges.size, 2)]


def detect_blinks(
    seq: GazeSequence,
    slope_thresh: float = SLOPE_THRESH_DEFAULT,
    stable_run: int = STABLE_RUN_DEFAULT,
    merge_gap: int = MERGE_GAP_DEFAULT,
) -> list[BlinkEvent]:
    """Locate blink events: missing runs plus their sharp artifact flanks.

    Pass ``slope_thresh=inf`` to disable flank extension. Events whose gap is
    smaller than ``merge_gap`` are merged into one extended event.
    """
    x = seq.samples
    n = len(seq)
    miss = seq.missing
    events: list[tuple[int, int]] = []
    for start, end in _missing_runs(miss):
        # extend left while the slope stays steep
        s, stable = start, 0
        k = start - 1
        while k > 0 and not (miss[k] or miss[k - 1]):
            if abs(x[k] - x[k - 1]) > slope_thresh:
                s = k - 1
                stable = 0
            else:
                stable += 1
                if stable >= stable_run:
                    break
            k -= 1
        # extend right symmetrically
        e, stable = end, 0
        k = end
        while k < n - 1 and not (miss[k] or miss[k + 1]):
            if abs(x[k + 1] - x[k]) > slope_thresh:
                e = k + 2
                stable = 0
            else:
                stable += 1
                if stable >= stable_run:
                    break
            k += 1
        events.append((s, e))

    merged: list[list[int]] = []
    for s, e in sorted(events):
        if merged and s - merged[-1][1] < merge_gap:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    return [BlinkEvent(s, e, "detected") for s, e in merged]


def blink_statistics(ds: Dataset, **detect_kwargs) -> BlinkStats:
    """Aggregate blink duration/position/count over every sequence.

    Sequences without blinks contribute a zero to the count multiset but
    nothing to durations or positions.
    """
    if len(ds) == 0:
        raise ValueError("dataset is empty")
    durations: list[int] = []
    positions: list[int] = []
    counts: list[int] = []
    for seq in ds.sequences:
        events = detect_blinks(seq, **detect_kwargs)
        counts.append(len(events))
        durations.extend(ev.duration for ev in events)
        positions.extend(ev.onset for ev in events)
    return BlinkStats(np.array(durations), np.array(positions), np.array(counts))


def inject_blinks(
    seq: GazeSequence, stats: BlinkStats, seed: int
) -> tuple[GazeSequence, MissingMask]:
    """Remove blink-shaped blocks sampled from empirical statistics.

    The blink count, then each blink's duration and start, are resampled
    with replacement from the multisets. Starts are clamped to >= 1 (the
    first sample is never removed) and ends are capped at the signal length
    with the duration shortened accordingly. Overlapping draws coalesce.
    """
    if not seq.is_complete():
        raise ValueError("sequence already has missing values")
    if stats.is_empty():
        raise ValueError("blink statistics are empty")
    n = len(seq)
    rng = np.random.default_rng(seed)
    n_blinks = int(rng.choice(stats.counts))
    removed = np.zeros(n, dtype=bool)
    if n_blinks > 0:
        if stats.durations.size == 0 or stats.positions.size == 0:
            raise ValueError("blink statistics lack durations or positions")
        durs = rng.choice(stats.durations, size=n_blinks)
        starts = rng.choice(stats.positions, size=n_blinks)
        for dur, start in zip(durs, starts):
            start = int(min(max(start, 1), n - 1))
            end = int(min(start + dur, n))
            removed[start:end] = True
    corrupted = seq.samples.copy()
    corrupted[removed] = np.nan
    return seq.with_samples(corrupted), MissingMask.from_bool(removed)


def large_gap_inject(
    seq: GazeSequence, start_ms: float = 5000.0, end_ms: float = 9000.0
) -> tuple[GazeSequence, MissingMask]:
    """Remove one long contiguous block (default 5 s to 9 s)."""
    if not seq.is_complete():
        raise ValueError("sequence already has missing values")
    start = round(start_ms * seq.rate_hz / 1000.0)
    end = round(end_ms * seq.rate_hz / 1000.0)
    if len(seq) < end:
        raise ValueError(
            f"sequence too short: {len(seq)} samples < {end} needed for the gap"
        )
    corrupted = seq.samples.copy()
    corrupted[start:end] = np.nan
    return seq.with_samples(corrupted), MissingMask.from_indices(
        np.arange(start, end), len(seq)
    )


def reference_stats(
    seed: int = 0,
    n_events: int = 500,
    signal_len: int = 15000,
    median_ms: float = 1200.0,
    sigma: float = 0.8,
    mean_count: float = 1.2,
) -> BlinkStats:
    """Stand-in empirical blink statistics for fully synthetic corpora.

    Durations are lognormal (right-skewed, like observed blink histograms),
    positions uniform over the interior, counts Poisson. Only a placeholder
    for statistics measured from real recordings via blink_statistics.
    """
    rng = np.random.default_rng(seed)
    durations = np.clip(
        rng.lognormal(np.log(median_ms), sigma, n_events), 100, 6000
    ).astype(np.int64)
    positions = rng.integers(1, max(signal_len - 100, 2), n_events)
    counts = rng.poisson(mean_count, n_events)
    return BlinkStats(durations, positions, counts)
