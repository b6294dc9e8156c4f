"""Synthetic pursuit-task targets and observer responses.

Twelve task conditions: horizontal linear motion (tasks 1-4), vertical
linear motion (5-8), horizontal lemniscate (9-10) and vertical lemniscate
(11-12). Linear tasks are modeled as sinusoids (config switch `triangular`
gives constant-velocity ramps instead); lemniscates use the Gerono
parametrization x = A*sin(wt), y = (A/2)*sin(2wt) so the axis relation is
closed-form. Each trial starts with 200 ms of central fixation.

The observer model is deliberately simple: gain-scaled, latency-shifted
target with first-order catch-up dynamics and additive Gaussian noise. The
amplitude/frequency presets are arbitrary defaults, not measured values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np
from scipy.signal import lfilter

from .core import Dataset, GazeSequence, SequenceMeta

__all__ = [
    "StimulusSpec",
    "PursuitModelSpec",
    "ModelRanges",
    "target_trajectory",
    "simulate_pursuit",
    "make_corpus",
    "axes_of_interest",
    "TASK_PRESETS",
]

FIXATION_S = 0.2

# (amplitude deg, frequency Hz) per task number
TASK_PRESETS: dict[int, tuple[float, float]] = {
    1: (5.0, 0.2),
    2: (5.0, 0.4),
    3: (10.0, 0.2),
    4: (10.0, 0.4),
    5: (5.0, 0.2),
    6: (5.0, 0.4),
    7: (10.0, 0.2),
    8: (10.0, 0.4),
    9: (5.0, 0.2),
    10: (10.0, 0.4),
    11: (5.0, 0.2),
    12: (10.0, 0.4),
}


def axes_of_interest(task: int) -> tuple[str, ...]:
    """Recorded axes per task: x for horizontal, y for vertical, both for 2-D."""
    if 1 <= task <= 4:
        return ("x",)
    if 5 <= task <= 8:
        return ("y",)
    if 9 <= task <= 12:
        return ("x", "y")
    raise ValueError(f"task must be in 1..12, got {task}")


@dataclass(frozen=True)
class StimulusSpec:
    task: int
    amplitude: float
    frequency: float
    duration_s: float = 15.0
    rate_hz: float = 1000.0
    waveform: str = "sinusoid"  # 'sinusoid' | 'triangular' for linear tasks

    def __post_init__(self):
        if not (1 <= self.task <= 12):
            raise ValueError(f"task must be in 1..12, got {self.task}")
        if self.amplitude <= 0 or self.frequency <= 0:
            raise ValueError("amplitude and frequency must be positive")
        if self.duration_s <= 0 or self.rate_hz <= 0:
            raise ValueError("duration_s and rate_hz must be positive")
        if self.waveform not in ("sinusoid", "triangular"):
            raise ValueError(f"unknown waveform {self.waveform!r}")

    @classmethod
    def for_task(cls, task: int, duration_s: float = 15.0, rate_hz: float = 1000.0,
                 waveform: str = "sinusoid") -> "StimulusSpec":
        amp, freq = TASK_PRESETS[task]
        return cls(task, amp, freq, duration_s, rate_hz, waveform)

    @property
    def n_samples(self) -> int:
        return round(self.duration_s * self.rate_hz)


def _linear_wave(spec: StimulusSpec, t: np.ndarray) -> np.ndarray:
    if spec.waveform == "triangular":
        # back-and-forth at constant speed; starts at center moving positive
        phase = (spec.frequency * t) % 1.0
        return spec.amplitude * np.where(
            phase < 0.25,
            4.0 * phase,
            np.where(phase < 0.75, 2.0 - 4.0 * phase, 4.0 * phase - 4.0),
        )
    return spec.amplitude * np.sin(2.0 * math.pi * spec.frequency * t)


def target_trajectory(spec: StimulusSpec) -> tuple[GazeSequence, GazeSequence]:
    """Target position over time on both axes, fixation period included."""
    n = spec.n_samples
    n_fix = min(round(FIXATION_S * spec.rate_hz), n)
    t = np.maximum(np.arange(n) - n_fix, 0) / spec.rate_hz

    w = 2.0 * math.pi * spec.frequency
    if spec.task <= 4:
        x = _linear_wave(spec, t)
        y = np.zeros(n)
    elif spec.task <= 8:
        x = np.zeros(n)
        y = _linear_wave(spec, t)
    elif spec.task <= 10:
        x = spec.amplitude * np.sin(w * t)
        y = 0.5 * spec.amplitude * np.sin(2.0 * w * t)
    else:
        y = spec.amplitude * np.sin(w * t)
        x = 0.5 * spec.amplitude * np.sin(2.0 * w * t)
    x[:n_fix] = 0.0
    y[:n_fix] = 0.0
    return (
        GazeSequence(x, rate_hz=spec.rate_hz),
        GazeSequence(y, rate_hz=spec.rate_hz),
    )


@dataclass(frozen=True)
class PursuitModelSpec:
    gain: float = 0.95
    latency_ms: float = 120.0
    noise_std: float = 0.1
    catchup_rate: float = 60.0  # 1/s

    def __post_init__(self):
        if not (0 < self.gain <= 1):
            raise ValueError(f"gain must be in (0, 1], got {self.gain}")
        if self.latency_ms < 0 or self.noise_std < 0 or self.catchup_rate < 0:
            raise ValueError("latency_ms, noise_std and catchup_rate must be >= 0")


def simulate_pursuit(
    target: GazeSequence, model: PursuitModelSpec, seed: int
) -> GazeSequence:
    """Synthetic observer response to a complete target trajectory."""
    if not target.is_complete():
        raise ValueError("target must be complete (no missing samples)")
    n = len(target)
    rate = target.rate_hz

    delay = round(model.latency_ms * rate / 1000.0)
    if delay > 0:
        delayed = np.concatenate(
            (np.full(min(delay, n), target.samples[0]), target.samples[: max(n - delay, 0)])
        )
    else:
        delayed = target.samples.copy()
    desired = model.gain * delayed

    # first-order catch-up: e[k] = e[k-1] + a*(desired[k] - e[k-1])
    a = 1.0 - math.exp(-model.catchup_rate / rate)
    if a >= 1.0:
        eye = desired.copy()
    elif a <= 0.0:
        eye = np.full(n, desired[0])
    else:
        zi = np.array([(1.0 - a) * desired[0]])
        eye, _ = lfilter([a], [1.0, -(1.0 - a)], desired, zi=zi)

    if model.noise_std > 0:
        rng = np.random.default_rng(seed)
        eye = eye + rng.normal(0.0, model.noise_std, n)
    return GazeSequence(eye, rate_hz=rate, meta=target.meta)


@dataclass(frozen=True)
class ModelRanges:
    """Per-participant (lo, hi) ranges for observer model parameters."""

    gain: tuple[float, float] = (0.85, 1.0)
    latency_ms: tuple[float, float] = (80.0, 180.0)
    noise_std: tuple[float, float] = (0.05, 0.15)
    catchup_rate: tuple[float, float] = (40.0, 80.0)

    def draw(self, rng: np.random.Generator) -> PursuitModelSpec:
        kwargs = {}
        for f in fields(self):
            lo, hi = getattr(self, f.name)
            kwargs[f.name] = float(rng.uniform(lo, hi))
        return PursuitModelSpec(**kwargs)


def _seq_seed(*key: int) -> int:
    return int(np.random.SeedSequence(list(key)).generate_state(1)[0])


def make_corpus(
    n_participants: int,
    tasks: list[int] | None = None,
    model_ranges: ModelRanges | None = None,
    seed: int = 0,
    duration_s: float = 15.0,
    rate_hz: float = 1000.0,
) -> Dataset:
    """One complete sequence per (participant, task, recorded axis, eye).

    Eye pairs share the participant's observer model and differ only by
    independent noise. Per-sequence seeds derive deterministically from
    (seed, participant, task, axis, eye), so generation may be parallelized
    without changing the output.
    """
    if n_participants <= 0:
        raise ValueError("n_participants must be positive")
    tasks = list(tasks) if tasks is not None else list(range(1, 13))
    ranges = model_ranges or ModelRanges()

    seqs = []
    for p in range(n_participants):
        pid = f"SYN{p:03d}"
        model = ranges.draw(np.random.default_rng(_seq_seed(seed, p, 9999)))
        for task in tasks:
            spec = StimulusSpec.for_task(task, duration_s=duration_s, rate_hz=rate_hz)
            targets = dict(zip(("x", "y"), target_trajectory(spec)))
            for ax_i, axis in enumerate(axes_of_interest(task)):
                for eye_i, eye in enumerate(("L", "R")):
                    meta = SequenceMeta(pid, task, axis, eye)
                    target = GazeSequence(
                        targets[axis].samples, rate_hz=rate_hz, meta=meta
                    )
                    out = simulate_pursuit(
                        target, model, _seq_seed(seed, p, task, ax_i, eye_i)
                    )
                    seqs.append(out)
    return Dataset(tuple(seqs))
