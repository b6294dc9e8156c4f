"""Factor-30 decimation and shape-preserving cubic interpolation.

The interpolant is the classic monotone piecewise cubic Hermite: slopes are
zero at local extrema of the data, a weighted harmonic mean of adjacent
secants on monotone runs, and a clamped one-sided three-point rule at the
endpoints. Decimation is by missing-aware block mean, which acts as a crude
low-pass at the same first order as the sample-rate reduction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import GazeSequence

__all__ = [
    "PchipSpline",
    "pchip_fit",
    "pchip_eval",
    "downsample",
    "upsample",
    "DEFAULT_FACTOR",
]

DEFAULT_FACTOR = 30


@dataclass(frozen=True)
class PchipSpline:
    knots: np.ndarray
    values: np.ndarray
    derivatives: np.ndarray

    def __post_init__(self):
        for name in ("knots", "values", "derivatives"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def _edge_slope(h0: float, h1: float, d0: float, d1: float) -> float:
    # one-sided three-point estimate, clamped to preserve shape
    m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1)
    if np.sign(m) != np.sign(d0):
        return 0.0
    if np.sign(d0) != np.sign(d1) and abs(m) > 3.0 * abs(d0):
        return 3.0 * d0
    return m


def pchip_fit(xs, ys) -> PchipSpline:
    """Fit shape-preserving Hermite slopes to strictly increasing data."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.size != y.size:
        raise ValueError("xs and ys must be 1-D arrays of equal length")
    if x.size < 2:
        raise ValueError("need at least 2 points")
    if not (np.diff(x) > 0).all():
        raise ValueError("xs must be strictly increasing (no duplicates)")
    if not np.isfinite(y).all():
        raise ValueError("ys must be finite")

    n = x.size
    h = np.diff(x)
    d = np.diff(y) / h
    m = np.zeros(n)
    if n == 2:
        m[:] = d[0]
        return PchipSpline(x, y, m)

    # interior: zero at sign changes/flats, weighted harmonic mean otherwise
    dl, dr = d[:-1], d[1:]
    extremum = (dl == 0.0) | (dr == 0.0) | (np.sign(dl) != np.sign(dr))
    w1 = 2.0 * h[1:] + h[:-1]
    w2 = h[1:] + 2.0 * h[:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        harmonic = (w1 + w2) / (w1 / dl + w2 / dr)
    m[1:-1] = np.where(extremum, 0.0, harmonic)
    m[0] = _edge_slope(h[0], h[1], d[0], d[1])
    m[-1] = _edge_slope(h[-1], h[-2], d[-1], d[-2])
    return PchipSpline(x, y, m)


def pchip_eval(sp: PchipSpline, x) -> np.ndarray | float:
    """Evaluate the interpolant; exact at knots, no extrapolation."""
    scalar = np.isscalar(x)
    xq = np.atleast_1d(np.asarray(x, dtype=np.float64))
    lo, hi = sp.knots[0], sp.knots[-1]
    if ((xq < lo) | (xq > hi)).any():
        bad = xq[(xq < lo) | (xq > hi)][0]
        raise ValueError(f"extrapolation requested: {bad} outside [{lo}, {hi}]")

    idx = np.searchsorted(sp.knots, xq, side="right") - 1
    idx = np.clip(idx, 0, sp.knots.size - 2)
    h = sp.knots[idx + 1] - sp.knots[idx]
    t = (xq - sp.knots[idx]) / h
    t2 = t * t
    t3 = t2 * t
    h10 = t3 - 2.0 * t2 + t
    h01 = -2.0 * t3 + 3.0 * t2
    h11 = t3 - t2
    # y0 + h01*(y1-y0) form keeps constant data and knot queries bit-exact
    # (every knot lands at t=0 of its own interval except the last, fixed below)
    out = (
        sp.values[idx]
        + h01 * (sp.values[idx + 1] - sp.values[idx])
        + h * (h10 * sp.derivatives[idx] + h11 * sp.derivatives[idx + 1])
    )
    out[xq == sp.knots[-1]] = sp.values[-1]
    return float(out[0]) if scalar else out


def downsample(seq: GazeSequence, factor: int = DEFAULT_FACTOR) -> GazeSequence:
    """Reduce rate by an integer factor via missing-aware block means.

    Output length is ceil(len/factor). A block maps to missing iff strictly
    more than half of its samples are missing.
    """
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    if factor == 1:
        return seq
    n = len(seq)
    n_blocks = math.ceil(n / factor)
    padded = np.full(n_blocks * factor, np.nan)
    padded[:n] = seq.samples
    valid = np.zeros(n_blocks * factor, dtype=bool)
    valid[:n] = True
    blocks = padded.reshape(n_blocks, factor)
    valid = valid.reshape(n_blocks, factor)

    obs = valid & ~np.isnan(blocks)
    n_obs = obs.sum(axis=1)
    n_actual = valid.sum(axis=1)
    n_missing = n_actual - n_obs
    with np.errstate(invalid="ignore"):
        means = np.where(obs, blocks, 0.0).sum(axis=1) / np.maximum(n_obs, 1)
        # keep constant blocks bit-exact (summation would round them)
        lo = np.where(obs, blocks, np.inf).min(axis=1)
        hi = np.where(obs, blocks, -np.inf).max(axis=1)
    means = np.where((lo == hi) & (n_obs > 0), lo, means)
    out = np.where((n_missing > n_actual / 2) | (n_obs == 0), np.nan, means)
    return GazeSequence(out, rate_hz=seq.rate_hz / factor, meta=seq.meta)


def upsample(
    seq: GazeSequence, target_len: int, factor: int | None = None
) -> GazeSequence:
    """Interpolate a complete coarse sequence back onto a fine grid.

    Coarse sample i becomes the knot at fine index i*factor and is
    reproduced exactly there. Fine positions past the last knot (at most
    factor-1 of them) hold the last knot's value.
    """
    if not seq.is_complete():
        raise ValueError("upsample requires a complete sequence (impute first)")
    if target_len < 1:
        raise ValueError("target_len must be positive")
    n = len(seq)
    if factor is None:
        factor = math.ceil(target_len / n)
    if n == 1:
        out = np.full(target_len, seq.samples[0])
        return GazeSequence(out, rate_hz=seq.rate_hz * factor, meta=seq.meta)

    knots = np.arange(n, dtype=np.float64) * factor
    sp = pchip_fit(knots, seq.samples)
    last = min(int(knots[-1]), target_len - 1)
    out = np.empty(target_len)
    out[: last + 1] = pchip_eval(sp, np.arange(last + 1, dtype=np.float64))
    out[last + 1 :] = seq.samples[-1]
    return GazeSequence(out, rate_hz=seq.rate_hz * factor, meta=seq.meta)
