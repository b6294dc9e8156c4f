import numpy as np
import pytest

from gazefill.core import GazeSequence
from gazefill.synthgen import (
    ModelRanges,
    PursuitModelSpec,
    StimulusSpec,
    axes_of_interest,
    make_corpus,
    simulate_pursuit,
    target_trajectory,
)


class TestStimulusSpec:
    def test_default_sample_count(self):
        assert StimulusSpec.for_task(1).n_samples == 15000

    def test_validation(self):
        with pytest.raises(ValueError):
            StimulusSpec(0, 5.0, 0.2)
        with pytest.raises(ValueError):
            StimulusSpec(1, -1.0, 0.2)
        with pytest.raises(ValueError):
            StimulusSpec(1, 5.0, 0.2, waveform="square")


class TestTargetTrajectory:
    def test_starts_at_center(self):
        x, y = target_trajectory(StimulusSpec.for_task(1, duration_s=1.0))
        assert x.samples[0] == 0.0 and y.samples[0] == 0.0

    def test_fixation_period_constant(self):
        x, y = target_trajectory(StimulusSpec.for_task(3, duration_s=1.0))
        assert np.array_equal(x.samples[:200], np.zeros(200))
        assert np.array_equal(y.samples[:200], np.zeros(200))

    def test_horizontal_tasks_move_x_only(self):
        for task in (1, 2, 3, 4):
            x, y = target_trajectory(StimulusSpec.for_task(task, duration_s=3.0))
            assert np.abs(x.samples).max() > 0
            assert np.array_equal(y.samples, np.zeros(len(y)))

    def test_vertical_tasks_move_y_only(self):
        x, y = target_trajectory(StimulusSpec.for_task(5, duration_s=3.0))
        assert np.array_equal(x.samples, np.zeros(len(x)))
        assert np.abs(y.samples).max() > 0

    def test_lemniscate_extrema(self):
        # Gerono parametrization: max |x| = A, max |y| = A/2 over a period
        spec = StimulusSpec(9, amplitude=6.0, frequency=0.5, duration_s=4.0)
        x, y = target_trajectory(spec)
        assert np.abs(x.samples).max() == pytest.approx(6.0, rel=1e-3)
        assert np.abs(y.samples).max() == pytest.approx(3.0, rel=1e-3)

    def test_lemniscate_axis_relation_pointwise(self):
        spec = StimulusSpec(9, amplitude=5.0, frequency=0.25, duration_s=5.0)
        x, y = target_trajectory(spec)
        t = np.maximum(np.arange(len(x)) - 200, 0) / 1000.0
        w = 2 * np.pi * 0.25
        assert np.allclose(x.samples, 5.0 * np.sin(w * t), atol=1e-12)
        assert np.allclose(y.samples, 2.5 * np.sin(2 * w * t), atol=1e-12)

    def test_vertical_lemniscate_swaps_axes(self):
        xh, yh = target_trajectory(StimulusSpec(9, 5.0, 0.2, duration_s=2.0))
        xv, yv = target_trajectory(StimulusSpec(11, 5.0, 0.2, duration_s=2.0))
        assert np.array_equal(xh.samples, yv.samples)
        assert np.array_equal(yh.samples, xv.samples)

    def test_triangular_waveform(self):
        spec = StimulusSpec(1, 5.0, 0.5, duration_s=4.0, waveform="triangular")
        x, _ = target_trajectory(spec)
        motion = x.samples[200:]
        assert np.abs(motion).max() == pytest.approx(5.0, rel=1e-2)
        # piecewise-constant speed away from the turning points
        speeds = np.abs(np.diff(motion))
        assert np.median(speeds) == pytest.approx(4 * 5.0 * 0.5 / 1000.0, rel=1e-6)

    def test_complete_and_finite(self):
        for task in range(1, 13):
            x, y = target_trajectory(StimulusSpec.for_task(task, duration_s=0.5))
            assert x.is_complete() and y.is_complete()


class TestSimulatePursuit:
    def test_identity_observer(self):
        x, _ = target_trajectory(StimulusSpec.for_task(1, duration_s=2.0))
        model = PursuitModelSpec(gain=1.0, latency_ms=0.0, noise_std=0.0,
                                 catchup_rate=float("inf"))
        out = simulate_pursuit(x, model, seed=0)
        assert np.max(np.abs(out.samples - x.samples)) < 1e-9

    def test_gain_sets_steady_state_amplitude(self):
        spec = StimulusSpec(1, amplitude=8.0, frequency=0.2, duration_s=10.0)
        x, _ = target_trajectory(spec)
        model = PursuitModelSpec(gain=0.9, latency_ms=0.0, noise_std=0.0,
                                 catchup_rate=60.0)
        out = simulate_pursuit(x, model, seed=0)
        ratio = np.abs(out.samples[5000:]).max() / 8.0
        assert ratio == pytest.approx(0.9, abs=0.01)

    def test_deterministic_per_seed(self):
        x, _ = target_trajectory(StimulusSpec.for_task(2, duration_s=1.0))
        model = PursuitModelSpec()
        a = simulate_pursuit(x, model, seed=5)
        b = simulate_pursuit(x, model, seed=5)
        c = simulate_pursuit(x, model, seed=6)
        assert np.array_equal(a.samples, b.samples)
        assert not np.array_equal(a.samples, c.samples)

    def test_rejects_missing_target(self):
        with pytest.raises(ValueError, match="complete"):
            simulate_pursuit(GazeSequence([1.0, np.nan]), PursuitModelSpec(), 0)

    def test_latency_shifts_response(self):
        spec = StimulusSpec(1, 5.0, 0.4, duration_s=5.0)
        x, _ = target_trajectory(spec)
        model = PursuitModelSpec(gain=1.0, latency_ms=150.0, noise_std=0.0,
                                 catchup_rate=float("inf"))
        out = simulate_pursuit(x, model, seed=0)
        assert np.array_equal(out.samples[150:], x.samples[:-150])

    def test_spectral_peak_matches_stimulus(self):
        spec = StimulusSpec(1, 5.0, 0.4, duration_s=10.0)
        x, _ = target_trajectory(spec)
        out = simulate_pursuit(x, PursuitModelSpec(noise_std=0.05), seed=1)
        spectrum = np.abs(np.fft.rfft(out.samples - out.samples.mean()))
        freqs = np.fft.rfftfreq(len(out), 1 / 1000.0)
        peak = freqs[np.argmax(spectrum)]
        assert abs(peak - 0.4) <= freqs[1]  # within one DFT bin


class TestMakeCorpus:
    def test_axis_convention_and_count(self):
        # 12 tasks: 4 x-only + 4 y-only + 4 two-axis = 16 per eye, 32 per person
        ds = make_corpus(2, seed=0, duration_s=0.05)
        assert len(ds) == 64
        axes = {(s.meta.task, s.meta.axis) for s in ds.sequences}
        for task in range(1, 13):
            assert axes_of_interest(task) == tuple(
                sorted({a for t, a in axes if t == task})
            ) or set(axes_of_interest(task)) == {a for t, a in axes if t == task}

    def test_paper_scale_count(self):
        # 172 participants x 32 sequences = 5,504
        ds = make_corpus(172, seed=0, duration_s=0.01)
        assert len(ds) == 5504

    def test_unit_case(self):
        ds = make_corpus(1, tasks=[1], seed=0, duration_s=0.05)
        assert len(ds) == 2
        assert {s.meta.eye for s in ds.sequences} == {"L", "R"}
        assert {s.meta.axis for s in ds.sequences} == {"x"}

    def test_deterministic(self):
        a = make_corpus(2, tasks=[1, 9], seed=3, duration_s=0.1)
        b = make_corpus(2, tasks=[1, 9], seed=3, duration_s=0.1)
        for sa, sb in zip(a.sequences, b.sequences):
            assert np.array_equal(sa.samples, sb.samples)

    def test_eye_pairs_differ_only_by_noise(self):
        ds = make_corpus(1, tasks=[1], seed=4, duration_s=2.0)
        left, right = ds.sequences
        diff = left.samples - right.samples
        assert np.abs(diff).max() > 0  # independent noise
        # noise is zero-mean and small relative to the signal
        assert abs(diff.mean()) < 0.05
        assert diff.std() < 0.5

    def test_sequences_complete_and_finite(self):
        ds = make_corpus(2, tasks=[1, 5, 9], seed=5, duration_s=0.3)
        for s in ds.sequences:
            assert s.is_complete()
            assert np.isfinite(s.samples).all()

    def test_model_ranges_draw_within_bounds(self):
        rng = np.random.default_rng(0)
        ranges = ModelRanges(gain=(0.9, 0.95))
        for _ in range(20):
            m = ranges.draw(rng)
            assert 0.9 <= m.gain <= 0.95
