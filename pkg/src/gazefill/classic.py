"""Baseline gap-fill methods behind one common imputer contract.

All imputers return a complete sequence in which observed input positions
pass through bit-exact; only missing positions are synthesized. No post-hoc
smoothing is applied at gap edges, so any discontinuity an imputer produces
is visible to the metrics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, GazeSequence, MissingMask
from .resample import pchip_eval, pchip_fit

__all__ = [
    "ImputerOutput",
    "SsaConfig",
    "KnnConfig",
    "impute_pchip",
    "ssa_decompose",
    "impute_ssa",
    "impute_knn",
]


@dataclass(frozen=True)
class ImputerOutput:
    sequence: GazeSequence  # complete
    filled: MissingMask  # positions that were synthesized

    def __post_init__(self):
        if not self.sequence.is_complete():
            raise ValueError("imputer output must be complete")


def _finish(seq: GazeSequence, values: np.ndarray) -> ImputerOutput:
    mask = MissingMask.from_bool(seq.missing)
    out = seq.samples.copy()
    out[mask.indices] = values[mask.indices]
    return ImputerOutput(seq.with_samples(out), mask)


# ---------------------------------------------------------------------------
# PCHIP gap fill
# ---------------------------------------------------------------------------


def impute_pchip(seq: GazeSequence) -> ImputerOutput:
    """Shape-preserving cubic through the observed points, evaluated in gaps.

    Leading/trailing missing runs are filled by holding the nearest observed
    value constant.
    """
    obs_idx = np.flatnonzero(~seq.missing)
    if obs_idx.size < 2:
        raise ValueError(f"need >= 2 observed samples, got {obs_idx.size}")
    x = seq.samples
    filled = x.copy()
    first, last = obs_idx[0], obs_idx[-1]
    filled[:first] = x[first]
    filled[last + 1 :] = x[last]
    interior = np.flatnonzero(np.isnan(filled))
    if interior.size:
        sp = pchip_fit(obs_idx.astype(np.float64), x[obs_idx])
        filled[interior] = pchip_eval(sp, interior.astype(np.float64))
    return _finish(seq, filled)


# ---------------------------------------------------------------------------
# Singular-spectrum analysis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SsaConfig:
    window_L: int = 50
    rank_r: int | None = None  # None: pick by captured-energy threshold
    forecast_blend: str = "average"  # 'forward' | 'backward' | 'average'
    energy_threshold: float = 0.995

    def __post_init__(self):
        if self.window_L < 2:
            raise ValueError(f"window_L must be >= 2, got {self.window_L}")
        if self.rank_r is not None and not (1 <= self.rank_r <= self.window_L):
            raise ValueError(f"rank_r must be in [1, window_L], got {self.rank_r}")
        if self.forecast_blend not in ("forward", "backward", "average"):
            raise ValueError(f"unknown forecast_blend {self.forecast_blend!r}")
        if not (0 < self.energy_threshold <= 1):
            raise ValueError("energy_threshold must be in (0, 1]")


def _hankel(x: np.ndarray, L: int) -> np.ndarray:
    return np.lib.stride_tricks.sliding_window_view(x, L).T  # (L, N-L+1)


def _diag_average(m: np.ndarray, counts: np.ndarray, anti_idx: np.ndarray, n: int) -> np.ndarray:
    sums = np.bincount(anti_idx, weights=m.ravel(), minlength=n)
    return sums / counts


def ssa_decompose(
    seq: GazeSequence, cfg: SsaConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Trajectory-matrix SVD of a complete series.

    Returns (singular_values, components) where components[i] is the
    diagonally averaged series of the i-th rank-1 term; the component rows
    sum to the input series.
    """
    if not seq.is_complete():
        raise ValueError("SSA decomposition requires a complete sequence")
    x = seq.samples
    n = x.size
    L = cfg.window_L
    if L > n // 2:
        raise ValueError(f"window_L={L} exceeds half the length ({n // 2})")
    X = _hankel(x, L)
    U, s, Vt = np.linalg.svd(X, full_matrices=False)

    K = n - L + 1
    anti_idx = np.add.outer(np.arange(L), np.arange(K)).ravel()
    counts = np.bincount(anti_idx, minlength=n).astype(np.float64)
    comps = np.empty((s.size, n))
    for i in range(s.size):
        m = s[i] * np.outer(U[:, i], Vt[i, :])
        comps[i] = _diag_average(m, counts, anti_idx, n)
    return s, comps


def _pick_rank(s: np.ndarray, cfg: SsaConfig) -> int:
    if cfg.rank_r is not None:
        return cfg.rank_r
    energy = np.cumsum(s**2) / np.sum(s**2)
    return int(np.searchsorted(energy, cfg.energy_threshold) + 1)


def _recurrence(x: np.ndarray, cfg: SsaConfig) -> np.ndarray:
    """Min-norm linear recurrence coefficients from a segment's SSA basis.

    Returns a of length L-1 with x[t] = sum_j a[j] * x[t-L+1+j], i.e. the
    dot product with the previous L-1 values in chronological order.
    """
    L = cfg.window_L
    X = _hankel(x, L)
    U, s, _ = np.linalg.svd(X, full_matrices=False)
    r = min(_pick_rank(s, cfg), L - 1)
    pi = U[L - 1, :r]
    nu2 = float(np.sum(pi**2))
    while r > 1 and nu2 >= 1.0 - 1e-10:  # verticality: drop components
        r -= 1
        pi = U[L - 1, :r]
        nu2 = float(np.sum(pi**2))
    if nu2 >= 1.0 - 1e-10:
        raise ValueError("degenerate SSA recurrence (vertical leading subspace)")
    return (U[: L - 1, :r] @ pi) / (1.0 - nu2)


def _forecast(segment: np.ndarray, steps: int, cfg: SsaConfig, lo: float, hi: float) -> np.ndarray:
    a = _recurrence(segment, cfg)
    window = segment[-(cfg.window_L - 1) :].copy()
    out = np.empty(steps)
    for t in range(steps):
        # unstable recurrence roots can blow up on noisy segments; clamp
        nxt = min(max(float(a @ window), lo), hi)
        out[t] = nxt
        window[:-1] = window[1:]
        window[-1] = nxt
    return out


def _observed_segment_before(x: np.ndarray, start: int) -> np.ndarray:
    """Contiguous observed run ending just before index start."""
    k = start
    while k > 0 and not np.isnan(x[k - 1]):
        k -= 1
    return x[k:start]


def _observed_segment_after(x: np.ndarray, end: int) -> np.ndarray:
    k = end
    while k < x.size and not np.isnan(x[k]):
        k += 1
    return x[end:k]


def impute_ssa(seq: GazeSequence, cfg: SsaConfig | None = None) -> ImputerOutput:
    """Fill gaps by recurrent forecasting from the flanking segments.

    Forward forecasts extrapolate the recurrence fitted on the segment
    before the gap; 'average' crossfades linearly into the backward forecast
    from the segment after it. When only one flank is long enough
    (>= window_L), that side alone is used; a gap with no usable flank is an
    error.
    """
    cfg = cfg or SsaConfig()
    x = seq.samples.copy()
    mask = MissingMask.from_bool(seq.missing)
    obs = seq.observed_values()
    if obs.size == 0:
        raise ValueError("cannot impute an all-missing sequence")
    span = float(obs.max() - obs.min())
    lo = float(obs.min()) - 3.0 * max(span, 1e-12)
    hi = float(obs.max()) + 3.0 * max(span, 1e-12)

    filled = x.copy()
    for g0, g1 in mask.runs():
        g = g1 - g0
        prev_seg = _observed_segment_before(filled, g0)
        next_seg = _observed_segment_after(x, g1)
        can_fwd = prev_seg.size >= cfg.window_L
        can_bwd = next_seg.size >= cfg.window_L
        want_fwd = cfg.forecast_blend in ("forward", "average")
        want_bwd = cfg.forecast_blend in ("backward", "average")
        fwd = _forecast(prev_seg, g, cfg, lo, hi) if can_fwd and want_fwd else None
        bwd = None
        if can_bwd and want_bwd:
            bwd = _forecast(next_seg[::-1], g, cfg, lo, hi)[::-1]
        if fwd is None and bwd is None:
            # fall back to whichever side is usable before giving up
            if can_fwd:
                fwd = _forecast(prev_seg, g, cfg, lo, hi)
            elif can_bwd:
                bwd = _forecast(next_seg[::-1], g, cfg, lo, hi)[::-1]
            else:
                raise ValueError(
                    f"gap [{g0}, {g1}): both flanking segments shorter than "
                    f"window_L={cfg.window_L}"
                )
        if fwd is not None and bwd is not None:
            t = np.arange(1, g + 1) / (g + 1)
            filled[g0:g1] = (1.0 - t) * fwd + t * bwd
        else:
            filled[g0:g1] = fwd if fwd is not None else bwd
    return _finish(seq, filled)


# ---------------------------------------------------------------------------
# KNN exemplar matching
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KnnConfig:
    k: int = 5
    context: int = 10  # samples each side
    weighting: str = "inverse-distance"  # 'uniform' | 'inverse-distance'

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.context < 1:
            raise ValueError(f"context must be >= 1, got {self.context}")
        if self.weighting not in ("uniform", "inverse-distance"):
            raise ValueError(f"unknown weighting {self.weighting!r}")


def _contiguous_left_context(x: np.ndarray, pos: int, limit: int) -> int:
    n = 0
    while n < limit and pos - 1 - n >= 0 and not np.isnan(x[pos - 1 - n]):
        n += 1
    return n


def _contiguous_right_context(x: np.ndarray, pos: int, limit: int) -> int:
    n = 0
    while n < limit and pos + n < x.size and not np.isnan(x[pos + n]):
        n += 1
    return n


def _knn_fill_chunk(
    filled: np.ndarray,
    g0: int,
    g1: int,
    library: list[np.ndarray],
    cfg: KnnConfig,
) -> np.ndarray:
    cl = _contiguous_left_context(filled, g0, cfg.context)
    cr = _contiguous_right_context(filled, g1, cfg.context)
    if cl == 0 and cr == 0:
        raise ValueError(f"gap [{g0}, {g1}): no observed context on either side")
    g = g1 - g0
    w = cl + g + cr
    query = np.concatenate((filled[g0 - cl : g0], filled[g1 : g1 + cr]))
    ctx_cols = np.concatenate((np.arange(cl), np.arange(cl + g, w)))

    dists: list[np.ndarray] = []
    interiors: list[np.ndarray] = []
    for lib in library:
        if lib.size < w:
            continue
        windows = np.lib.stride_tricks.sliding_window_view(lib, w)
        diff = windows[:, ctx_cols] - query
        dists.append(np.sqrt(np.sum(diff**2, axis=1)))
        interiors.append(windows[:, cl : cl + g])
    if not dists:
        raise ValueError(f"no library window of length {w} for gap [{g0}, {g1})")
    d = np.concatenate(dists)
    if cfg.k > d.size:
        raise ValueError(f"k={cfg.k} exceeds the {d.size} available library windows")
    inter = np.concatenate(interiors, axis=0)
    best = np.argsort(d, kind="stable")[: cfg.k]
    if cfg.weighting == "uniform":
        return inter[best].mean(axis=0)
    wts = 1.0 / (d[best] + 1e-12)
    return (wts[:, None] * inter[best]).sum(axis=0) / wts.sum()


def impute_knn(
    seq: GazeSequence, library: Dataset, cfg: KnnConfig | None = None
) -> ImputerOutput:
    """Fill gaps with the context-weighted mean of nearest library exemplars.

    The query is the observed context flanking the gap; candidate windows
    slide over every complete library sequence. Gaps too long for any
    library window are filled piecewise, window by window.
    """
    cfg = cfg or KnnConfig()
    lib = [s.samples for s in library.sequences if s.is_complete()]
    if not lib:
        raise ValueError("library has no complete sequences")
    max_lib = max(s.size for s in lib)

    mask = MissingMask.from_bool(seq.missing)
    filled = seq.samples.copy()
    for g0, g1 in mask.runs():
        pos = g0
        while pos < g1:
            # largest chunk that still fits a library window with some context
            room = max_lib - 2 * cfg.context
            chunk = min(g1 - pos, max(room, 1))
            filled[pos : pos + chunk] = _knn_fill_chunk(
                filled, pos, pos + chunk, lib, cfg
            )
            pos += chunk
    return _finish(seq, filled)
