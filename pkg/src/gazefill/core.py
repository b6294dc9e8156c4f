"""Shared sequence/mask/dataset types, normalization, splitting and file I/O.

Sequences are fixed-rate gaze traces in degrees of visual angle. Missing
samples are represented as IEEE NaN in memory and as the literal ``NA`` on
disk. Infinities in input files are treated as missing (trackers record
blink dropouts as excursions to infinity).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "FormatError",
    "SequenceMeta",
    "GazeSequence",
    "MissingMask",
    "NormalizationParams",
    "Dataset",
    "zscore",
    "split_by_participant",
    "load_sequence",
    "save_sequence",
    "load_sequences",
    "save_dataset",
    "load_dataset",
]

VALID_AXES = ("x", "y")
VALID_EYES = ("L", "R")


class FormatError(ValueError):
    """Malformed sequence file; message names the file and line."""


@dataclass(frozen=True)
class SequenceMeta:
    participant: str
    task: int  # SPT number, 1..12
    axis: str  # 'x' | 'y'
    eye: str  # 'L' | 'R'

    def __post_init__(self):
        if not (1 <= self.task <= 12):
            raise ValueError(f"task must be in 1..12, got {self.task}")
        if self.axis not in VALID_AXES:
            raise ValueError(f"axis must be one of {VALID_AXES}, got {self.axis!r}")
        if self.eye not in VALID_EYES:
            raise ValueError(f"eye must be one of {VALID_EYES}, got {self.eye!r}")

    def filename(self) -> str:
        return f"{self.participant}_SPT{self.task}_{self.axis}_{self.eye}.csv"


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class GazeSequence:
    """Fixed-rate samples with NaN missing markers.

    Immutable after construction; the sample buffer is copied in and marked
    read-only, so instances are safe to share across threads.
    """

    samples: np.ndarray
    rate_hz: float = 1000.0
    meta: SequenceMeta | None = None

    def __post_init__(self):
        arr = _frozen_array(self.samples)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("samples must be a nonempty 1-D array")
        if np.isinf(arr).any():
            raise ValueError("samples must be finite or NaN, never infinity")
        if not self.rate_hz > 0:
            raise ValueError(f"rate_hz must be positive, got {self.rate_hz}")
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def missing(self) -> np.ndarray:
        """Boolean array, True where the sample is missing."""
        return np.isnan(self.samples)

    @property
    def n_missing(self) -> int:
        return int(self.missing.sum())

    def is_complete(self) -> bool:
        return self.n_missing == 0

    def observed_values(self) -> np.ndarray:
        return self.samples[~self.missing]

    def with_samples(self, samples) -> "GazeSequence":
        return GazeSequence(samples, rate_hz=self.rate_hz, meta=self.meta)


@dataclass(frozen=True)
class MissingMask:
    """Strictly increasing index set into a sequence of known length."""

    indices: np.ndarray
    length: int

    def __post_init__(self):
        idx = np.array(self.indices, dtype=np.int64, copy=True)
        idx.flags.writeable = False
        if idx.ndim != 1:
            raise ValueError("indices must be 1-D")
        if idx.size:
            if not (np.diff(idx) > 0).all():
                raise ValueError("indices must be strictly increasing")
            if idx[0] < 0 or idx[-1] >= self.length:
                raise ValueError(
                    f"indices must lie in [0, {self.length}), got range "
                    f"[{idx[0]}, {idx[-1]}]"
                )
        if self.length <= 0:
            raise ValueError("length must be positive")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def from_bool(cls, missing: np.ndarray) -> "MissingMask":
        missing = np.asarray(missing, dtype=bool)
        return cls(np.flatnonzero(missing), len(missing))

    @classmethod
    def from_indices(cls, indices, length: int) -> "MissingMask":
        idx = np.unique(np.asarray(indices, dtype=np.int64))
        return cls(idx, length)

    @property
    def n_imp(self) -> int:
        return int(self.indices.size)

    def to_bool(self) -> np.ndarray:
        out = np.zeros(self.length, dtype=bool)
        out[self.indices] = True
        return out

    def runs(self) -> list[tuple[int, int]]:
        """Maximal contiguous runs as half-open (start, end) pairs."""
        if self.indices.size == 0:
            return []
        breaks = np.flatnonzero(np.diff(self.indices) > 1)
        starts = np.concatenate(([0], breaks + 1))
        ends = np.concatenate((breaks, [self.indices.size - 1]))
        return [
            (int(self.indices[s]), int(self.indices[e]) + 1)
            for s, e in zip(starts, ends)
        ]


@dataclass(frozen=True)
class NormalizationParams:
    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError(f"std must be positive, got {self.std}")

    def apply(self, seq: GazeSequence) -> GazeSequence:
        return seq.with_samples((seq.samples - self.mean) / self.std)

    def invert(self, seq: GazeSequence) -> GazeSequence:
        return seq.with_samples(seq.samples * self.std + self.mean)


def zscore(
    seq: GazeSequence, params: NormalizationParams | None = None
) -> tuple[GazeSequence, NormalizationParams]:
    """Standardize observed samples to mean 0, std 1 (population convention).

    Statistics are computed over observed positions only; missing positions
    stay missing. Pass ``params`` to reuse statistics from elsewhere (e.g.
    corpus-level normalization).
    """
    if params is None:
        obs = seq.observed_values()
        if obs.size == 0:
            raise ValueError("cannot z-score an all-missing sequence")
        mean = float(obs.mean())
        std = float(obs.std())  # population: divide by N
        if std == 0.0:
            raise ValueError("cannot z-score a zero-variance sequence")
        params = NormalizationParams(mean, std)
    return params.apply(seq), params


@dataclass(frozen=True)
class Dataset:
    """Sequences plus a per-participant train/test assignment."""

    sequences: tuple[GazeSequence, ...]
    split: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "sequences", tuple(self.sequences))
        for pid, part in self.split.items():
            if part not in ("train", "test"):
                raise ValueError(f"split[{pid!r}] must be 'train' or 'test', got {part!r}")

    def __len__(self) -> int:
        return len(self.sequences)

    def participants(self) -> list[str]:
        seen: dict[str, None] = {}
        for s in self.sequences:
            if s.meta is not None:
                seen.setdefault(s.meta.participant, None)
        return list(seen)

    def subset(self, part: str) -> list[GazeSequence]:
        """Sequences whose participant is assigned to ``part``."""
        return [
            s
            for s in self.sequences
            if s.meta is not None and self.split.get(s.meta.participant) == part
        ]


def split_by_participant(
    ds: Dataset, n_train: int, n_test: int, seed: int
) -> Dataset:
    """Assign participants to disjoint train/test splits, deterministically.

    Participants beyond the first ``n_train + n_test`` of the shuffled order
    are left unassigned. Requesting a (0, 0) split on a nonempty dataset is
    rejected rather than silently dropping all data.
    """
    participants = sorted(ds.participants())
    if n_train + n_test > len(participants):
        raise ValueError(
            f"requested {n_train}+{n_test} participants but only "
            f"{len(participants)} available"
        )
    if n_train == 0 and n_test == 0 and len(ds) > 0:
        raise ValueError("(0, 0) split on a nonempty dataset leaves every sequence unassigned")
    rng = np.random.default_rng(seed)
    order = [participants[i] for i in rng.permutation(len(participants))]
    split = {pid: "train" for pid in order[:n_train]}
    split.update({pid: "test" for pid in order[n_train : n_train + n_test]})
    return Dataset(ds.sequences, split)


# ---------------------------------------------------------------------------
# File I/O
#
# Sequence file: one header line
#   # participant=<id> task=SPT<1-12> axis=<x|y> eye=<L|R> rate_hz=<f>
# then rows "index,value" with NA for missing.
# ---------------------------------------------------------------------------

_HEADER_RE = re.compile(
    r"^#\s*participant=(?P<participant>\S+)\s+task=SPT(?P<task>\d+)\s+"
    r"axis=(?P<axis>[xy])\s+eye=(?P<eye>[LR])\s+rate_hz=(?P<rate>\S+)\s*$"
)


def save_sequence(seq: GazeSequence, path: str | Path) -> None:
    if seq.meta is None:
        raise ValueError("cannot save a sequence without metadata")
    m = seq.meta
    lines = [
        f"# participant={m.participant} task=SPT{m.task} axis={m.axis} "
        f"eye={m.eye} rate_hz={float(seq.rate_hz)!r}"
    ]
    for i, v in enumerate(seq.samples):
        lines.append(f"{i},NA" if np.isnan(v) else f"{i},{float(v)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_sequence(path: str | Path) -> GazeSequence:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise FormatError(f"{path}: unreadable file: {e}") from e
    lines = text.splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file")
    header = _HEADER_RE.match(lines[0])
    if header is None:
        raise FormatError(f"{path}:1: malformed header: {lines[0]!r}")
    try:
        meta = SequenceMeta(
            participant=header["participant"],
            task=int(header["task"]),
            axis=header["axis"],
            eye=header["eye"],
        )
        rate = float(header["rate"])
    except ValueError as e:
        raise FormatError(f"{path}:1: bad header field: {e}") from e

    values = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise FormatError(
                f"{path}:{lineno}: expected 2 columns, got {len(parts)}"
            )
        idx_str, val_str = parts[0].strip(), parts[1].strip()
        try:
            idx = int(idx_str)
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-integer index {idx_str!r}") from None
        if idx != len(values):
            raise FormatError(
                f"{path}:{lineno}: index {idx} out of order (expected {len(values)})"
            )
        if val_str == "NA":
            values.append(np.nan)
            continue
        try:
            v = float(val_str)
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-numeric value {val_str!r}") from None
        # blink dropouts are sometimes recorded as excursions to infinity
        values.append(np.nan if np.isinf(v) else v)
    if not values:
        raise FormatError(f"{path}: no data rows")
    return GazeSequence(values, rate_hz=rate, meta=meta)


def load_sequences(path: str | Path) -> Dataset:
    """Load every ``*.csv`` sequence file under a directory (no split)."""
    root = Path(path)
    if not root.is_dir():
        raise FormatError(f"{root}: not a directory")
    seqs = [load_sequence(f) for f in sorted(root.glob("*.csv"))]
    return Dataset(tuple(seqs))


def save_dataset(ds: Dataset, path: str | Path) -> None:
    """Write one CSV per sequence plus a JSON manifest with the split."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    files = []
    for seq in ds.sequences:
        name = seq.meta.filename()
        save_sequence(seq, root / name)
        files.append(name)
    manifest = {"files": files, "split": ds.split}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_dataset(path: str | Path) -> Dataset:
    """Load a dataset directory, honoring its manifest if present."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        return load_sequences(root)
    manifest = json.loads(manifest_path.read_text())
    seqs = [load_sequence(root / name) for name in manifest["files"]]
    return Dataset(tuple(seqs), dict(manifest.get("split", {})))
