"""Time- and frequency-domain scores for one (original, imputed, mask) triple.

Time-domain metrics are computed only at imputed positions; frequency-domain
ones over the full (complete) signals. Band membership uses the physical bin
frequency min(k, K-k)*rate/K, so the conjugate-symmetric upper half-spectrum
lands in the same band as its mirror; the DC bin belongs to the low band.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import GazeSequence, MissingMask

__all__ = [
    "MetricsReport",
    "SpectralCoefficients",
    "mae",
    "mre",
    "rmse",
    "sim",
    "fsd",
    "dft",
    "rmse_f",
    "evaluate",
]

METRIC_ORDER = ("mae", "mre", "rmse", "sim", "fsd", "rmse_f", "rmse_f_low", "rmse_f_high")

LOW_CUT_HZ = 1.0
HIGH_CUT_HZ = 5.0


def _values(seq) -> np.ndarray:
    if isinstance(seq, GazeSequence):
        return seq.samples
    return np.asarray(seq, dtype=np.float64)


def _masked_pair(x, xhat, mask: MissingMask) -> tuple[np.ndarray, np.ndarray]:
    xv, xh = _values(x), _values(xhat)
    if xv.size != xh.size:
        raise ValueError(f"length mismatch: {xv.size} vs {xh.size}")
    if mask.length != xv.size:
        raise ValueError(f"mask length {mask.length} does not match signal {xv.size}")
    if mask.n_imp == 0:
        raise ValueError("empty mask: no imputed positions to score")
    xi = xv[mask.indices]
    xhi = xh[mask.indices]
    if np.isnan(xi).any():
        raise ValueError("ground truth is missing at some mask positions")
    if np.isnan(xhi).any():
        raise ValueError("imputed signal is missing at some mask positions")
    return xi, xhi


def mae(x, xhat, mask: MissingMask) -> float:
    """Mean absolute difference at imputed positions."""
    xi, xhi = _masked_pair(x, xhat, mask)
    return float(np.mean(np.abs(xi - xhi)))


def mre(x, xhat, mask: MissingMask) -> float:
    """Mean |relative| difference at imputed positions, zeros excluded.

    Positions where the true value is exactly zero are excluded from the
    average to avoid division by zero; the exclusion count is surfaced by
    :func:`evaluate`.
    """
    xi, xhi = _masked_pair(x, xhat, mask)
    keep = xi != 0.0
    if not keep.any():
        raise ValueError("every mask position has a zero true value")
    return float(np.mean(np.abs((xi[keep] - xhi[keep]) / xi[keep])))


def rmse(x, xhat, mask: MissingMask) -> float:
    """Root mean squared difference at imputed positions."""
    xi, xhi = _masked_pair(x, xhat, mask)
    return float(np.sqrt(np.mean((xi - xhi) ** 2)))


def sim(x, xhat, mask: MissingMask) -> float:
    """Pearson-form linear correlation over imputed positions."""
    xi, xhi = _masked_pair(x, xhat, mask)
    if xi.size < 2:
        raise ValueError("similarity needs at least 2 imputed positions")
    dx = xi - xi.mean()
    dh = xhi - xhi.mean()
    denom = np.sqrt(np.sum(dx**2)) * np.sqrt(np.sum(dh**2))
    if denom == 0.0:
        raise ValueError("similarity undefined: constant signal at imputed positions")
    return float(np.sum(dx * dh) / denom)


def fsd(x, xhat, mask: MissingMask) -> float:
    """RMSE normalized by the true signal's std at imputed positions."""
    xi, _ = _masked_pair(x, xhat, mask)
    std = float(np.sqrt(np.mean((xi - xi.mean()) ** 2)))  # population
    if std == 0.0:
        raise ValueError("FSD undefined: zero variance at imputed positions")
    return rmse(x, xhat, mask) / std


@dataclass(frozen=True)
class SpectralCoefficients:
    coefficients: np.ndarray  # complex, one per bin, k = 0..K-1
    bin_hz: float  # frequency resolution rate/K

    @property
    def n_bins(self) -> int:
        return self.coefficients.size


def dft(seq: GazeSequence) -> SpectralCoefficients:
    """Unnormalized forward DFT of a complete sequence, K = length."""
    if not seq.is_complete():
        raise ValueError("frequency analysis requires a complete sequence")
    coeffs = np.fft.fft(seq.samples)
    return SpectralCoefficients(coeffs, seq.rate_hz / len(seq))


def _band_bins(k: int, rate: float, band: str) -> np.ndarray:
    ks = np.arange(k)
    freq = np.minimum(ks, k - ks) * rate / k
    if band == "full":
        return np.ones(k, dtype=bool)
    if band == "low":
        return freq < LOW_CUT_HZ
    if band == "high":
        return freq >= HIGH_CUT_HZ
    if band == "mid":  # internal, completes the partition for checks
        return (freq >= LOW_CUT_HZ) & (freq < HIGH_CUT_HZ)
    raise ValueError(f"unknown band {band!r}")


def rmse_f(x: GazeSequence, xhat: GazeSequence, band: str = "full") -> float:
    """RMS modulus of the DFT coefficient differences over a frequency band."""
    if len(x) != len(xhat):
        raise ValueError(f"length mismatch: {len(x)} vs {len(xhat)}")
    if x.rate_hz != xhat.rate_hz:
        raise ValueError(f"rate mismatch: {x.rate_hz} vs {xhat.rate_hz}")
    cx = dft(x).coefficients
    ch = dft(xhat).coefficients
    bins = _band_bins(len(x), x.rate_hz, band)
    if not bins.any():
        raise ValueError(f"band {band!r} selects no bins at rate {x.rate_hz}")
    diff = np.abs(cx[bins] - ch[bins])
    return float(np.sqrt(np.mean(diff**2)))


@dataclass
class MetricsReport:
    """The eight scores for one (original, imputed, mask) triple.

    A metric whose preconditions fail is recorded as None with its reason in
    ``undefined`` rather than silently zeroed.
    """

    mae: float | None = None
    mre: float | None = None
    rmse: float | None = None
    sim: float | None = None
    fsd: float | None = None
    rmse_f: float | None = None
    rmse_f_low: float | None = None
    rmse_f_high: float | None = None
    n_imp: int = 0
    excluded_zero_count: int = 0
    units: str = "deg"
    undefined: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls(**json.loads(text))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "MetricsReport":
        return cls.from_json(Path(path).read_text())

    def row(self) -> list[float | None]:
        return [getattr(self, name) for name in METRIC_ORDER]


def evaluate(
    x: GazeSequence,
    xhat: GazeSequence,
    mask: MissingMask,
    rate: float | None = None,
    units: str = "deg",
) -> MetricsReport:
    """Compute all eight metrics; failures are recorded, not raised."""
    if rate is not None and rate != x.rate_hz:
        x = GazeSequence(x.samples, rate_hz=rate, meta=x.meta)
        xhat = GazeSequence(xhat.samples, rate_hz=rate, meta=xhat.meta)
    report = MetricsReport(n_imp=mask.n_imp, units=units)
    if mask.n_imp:
        truth_at_mask = _values(x)[mask.indices]
        report.excluded_zero_count = int(np.sum(truth_at_mask == 0.0))

    time_domain = {"mae": mae, "mre": mre, "rmse": rmse, "sim": sim, "fsd": fsd}
    for name, fn in time_domain.items():
        try:
            setattr(report, name, fn(x, xhat, mask))
        except ValueError as e:
            report.undefined[name] = str(e)
    for name, band in (("rmse_f", "full"), ("rmse_f_low", "low"), ("rmse_f_high", "high")):
        try:
            setattr(report, name, rmse_f(x, xhat, band))
        except ValueError as e:
            report.undefined[name] = str(e)
    return report
