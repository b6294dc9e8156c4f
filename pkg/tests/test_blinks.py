import numpy as np
import pytest
from scipy.stats import ks_2samp, skew

from gazefill.blinks import (
    BlinkEvent,
    BlinkStats,
    blink_statistics,
    detect_blinks,
    inject_blinks,
    large_gap_inject,
    reference_stats,
)
from gazefill.core import Dataset, GazeSequence, SequenceMeta


def flat_with_gap(length=1000, gap=(100, 150), level=2.0):
    x = np.full(length, level)
    x[gap[0] : gap[1]] = np.nan
    return GazeSequence(x)


class TestDetect:
    def test_complete_sequence_no_events(self):
        assert detect_blinks(GazeSequence(np.zeros(500))) == []

    def test_flat_flanks_no_extension(self):
        events = detect_blinks(flat_with_gap())
        assert len(events) == 1
        assert (events[0].onset, events[0].offset) == (100, 150)
        assert events[0].source == "detected"

    def test_merge_close_events(self):
        x = np.zeros(1000)
        x[100:110] = np.nan
        x[112:120] = np.nan
        events = detect_blinks(GazeSequence(x), merge_gap=5)
        assert [(e.onset, e.offset) for e in events] == [(100, 120)]

    def test_no_merge_when_far_apart(self):
        x = np.zeros(1000)
        x[100:110] = np.nan
        x[300:310] = np.nan
        events = detect_blinks(GazeSequence(x), merge_gap=50)
        assert len(events) == 2

    def test_slope_extension_covers_artifact_flank(self):
        # steep recovery ramp after the gap gets absorbed into the event
        x = np.zeros(1000)
        x[100:150] = np.nan
        x[150:155] = [8.0, 6.0, 4.0, 2.0, 1.0]  # steep: |diff| > 0.5
        events = detect_blinks(GazeSequence(x), slope_thresh=0.5, stable_run=5)
        assert len(events) == 1
        assert events[0].onset == 100
        assert events[0].offset >= 155

    def test_extension_disabled_with_inf_threshold(self):
        x = np.zeros(1000)
        x[100:150] = np.nan
        x[150:155] = [8.0, 6.0, 4.0, 2.0, 1.0]
        events = detect_blinks(GazeSequence(x), slope_thresh=np.inf)
        assert (events[0].onset, events[0].offset) == (100, 150)

    def test_every_missing_run_covered_once(self):
        rng = np.random.default_rng(0)
        x = rng.normal(0, 0.1, 2000)
        for start in (50, 400, 900, 1500):
            x[start : start + rng.integers(10, 80)] = np.nan
        seq = GazeSequence(x)
        events = detect_blinks(seq, slope_thresh=np.inf, merge_gap=1)
        covered = np.zeros(2000, dtype=bool)
        for e in events:
            covered[e.onset : e.offset] = True
        assert covered[seq.missing].all()
        # events are disjoint
        spans = sorted((e.onset, e.offset) for e in events)
        assert all(a_end <= b_start for (_, a_end), (b_start, _) in zip(spans, spans[1:]))


class TestEvent:
    def test_validation(self):
        with pytest.raises(ValueError):
            BlinkEvent(5, 5)
        with pytest.raises(ValueError):
            BlinkEvent(-1, 5)
        with pytest.raises(ValueError):
            BlinkEvent(0, 5, source="guessed")


def _ds(seqs):
    tagged = []
    for i, s in enumerate(seqs):
        meta = SequenceMeta(f"P{i:03d}", 1, "x", "L")
        tagged.append(GazeSequence(s.samples, rate_hz=s.rate_hz, meta=meta))
    return Dataset(tuple(tagged))


class TestStatistics:
    def test_complete_dataset_all_zero_counts(self):
        ds = _ds([GazeSequence(np.zeros(100)) for _ in range(3)])
        st = blink_statistics(ds)
        assert list(st.counts) == [0, 0, 0]
        assert st.durations.size == 0 and st.positions.size == 0

    def test_single_event_echo(self):
        ds = _ds([flat_with_gap(1000, (100, 150))])
        st = blink_statistics(ds)
        assert list(st.durations) == [50]
        assert list(st.positions) == [100]
        assert list(st.counts) == [1]

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            blink_statistics(Dataset(()))

    def test_reference_durations_right_skewed(self):
        st = reference_stats(0)
        assert skew(st.durations) > 0

    def test_measured_durations_right_skewed_on_synthetic_corpus(self):
        # inject reference blinks, detect them back, check the histogram shape
        rng = np.random.default_rng(1)
        stats = reference_stats(0)
        seqs = []
        for i in range(40):
            clean = GazeSequence(rng.normal(0, 0.05, 15000))
            corrupted, _ = inject_blinks(clean, stats, seed=i)
            seqs.append(corrupted)
        measured = blink_statistics(_ds(seqs), slope_thresh=np.inf)
        assert measured.durations.size > 20
        assert skew(measured.durations) > 0

    def test_json_roundtrip(self, tmp_path):
        st = reference_stats(2)
        st.save(tmp_path / "stats.json")
        back = BlinkStats.load(tmp_path / "stats.json")
        assert np.array_equal(back.durations, st.durations)
        assert np.array_equal(back.positions, st.positions)
        assert np.array_equal(back.counts, st.counts)

    def test_scaled(self):
        st = BlinkStats([60, 29], [90, 3], [1])
        sc = st.scaled(30)
        assert list(sc.durations) == [2, 1]  # 29//30 clamps to 1
        assert list(sc.positions) == [3, 0]


class TestInject:
    def test_zero_counts_noop(self):
        seq = GazeSequence(np.arange(100.0))
        stats = BlinkStats([10], [5], [0])
        out, mask = inject_blinks(seq, stats, seed=0)
        assert np.array_equal(out.samples, seq.samples)
        assert mask.n_imp == 0

    def test_boundary_shortening(self):
        # duration 10 starting at 14995 in a 15000 signal occupies [14995, 15000)
        seq = GazeSequence(np.zeros(15000))
        stats = BlinkStats([10], [14995], [1])
        out, mask = inject_blinks(seq, stats, seed=0)
        assert list(mask.indices) == [14995, 14996, 14997, 14998, 14999]

    def test_first_sample_never_removed(self):
        seq = GazeSequence(np.zeros(100))
        stats = BlinkStats([5], [0], [1])
        _, mask = inject_blinks(seq, stats, seed=0)
        assert 0 not in mask.indices
        assert list(mask.indices) == [1, 2, 3, 4, 5]

    def test_deterministic(self):
        seq = GazeSequence(np.zeros(5000))
        stats = reference_stats(3, signal_len=5000)
        a = inject_blinks(seq, stats, seed=9)
        b = inject_blinks(seq, stats, seed=9)
        assert np.array_equal(a[0].samples, b[0].samples, equal_nan=True)
        assert np.array_equal(a[1].indices, b[1].indices)

    def test_rejects_incomplete_input(self):
        with pytest.raises(ValueError, match="already has missing"):
            inject_blinks(GazeSequence([1.0, np.nan]), reference_stats(0), 0)

    def test_rejects_empty_stats(self):
        stats = BlinkStats([], [], [])
        with pytest.raises(ValueError, match="empty"):
            inject_blinks(GazeSequence(np.zeros(10)), stats, 0)

    def test_mask_matches_removed_positions(self):
        seq = GazeSequence(np.random.default_rng(0).normal(0, 1, 15000))
        out, mask = inject_blinks(seq, reference_stats(1), seed=4)
        assert np.array_equal(np.flatnonzero(out.missing), mask.indices)

    def test_detect_recovers_injected_blocks(self):
        # every truth-mask run is contained in exactly one detected event
        rng = np.random.default_rng(5)
        stats = reference_stats(5)
        for i in range(10):
            seq = GazeSequence(np.full(15000, float(i)))  # flat flanks
            corrupted, mask = inject_blinks(seq, stats, seed=i)
            events = detect_blinks(corrupted, slope_thresh=np.inf)
            for run_start, run_end in mask.runs():
                inside = [
                    e for e in events if e.onset <= run_start and run_end <= e.offset
                ]
                assert len(inside) == 1

    def test_duration_distribution_converges(self):
        # one blink per draw, interior positions, no clipping: the injected
        # duration distribution matches the source multiset (KS < 0.05)
        rng = np.random.default_rng(6)
        source = np.clip(rng.lognormal(np.log(300), 0.7, 400), 20, 2000).astype(int)
        stats = BlinkStats(source, [7000], [1])
        seq = GazeSequence(np.zeros(15000))
        draws = []
        for i in range(10_000):
            _, mask = inject_blinks(seq, stats, seed=i)
            (run,) = mask.runs()
            draws.append(run[1] - run[0])
        ks = ks_2samp(draws, source).statistic
        assert ks < 0.05


class TestLargeGap:
    def test_standard_gap(self):
        seq = GazeSequence(np.zeros(15000))
        out, mask = large_gap_inject(seq)
        assert mask.n_imp == 4000
        assert mask.indices[0] == 5000 and mask.indices[-1] == 8999
        assert not np.isnan(out.samples[4999]) and not np.isnan(out.samples[9000])

    def test_too_short_rejected(self):
        with pytest.raises(ValueError, match="too short"):
            large_gap_inject(GazeSequence(np.zeros(8000)))

    def test_double_application_rejected(self):
        seq = GazeSequence(np.zeros(15000))
        out, _ = large_gap_inject(seq)
        with pytest.raises(ValueError, match="already has missing"):
            large_gap_inject(out)

    def test_rate_aware(self):
        seq = GazeSequence(np.zeros(1000), rate_hz=100.0)  # 10 s at 100 Hz
        out, mask = large_gap_inject(seq)
        assert mask.indices[0] == 500 and mask.n_imp == 400
