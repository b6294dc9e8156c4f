import numpy as np
import pytest

from gazefill.core import (
    Dataset,
    FormatError,
    GazeSequence,
    MissingMask,
    NormalizationParams,
    SequenceMeta,
    load_dataset,
    load_sequence,
    load_sequences,
    save_dataset,
    save_sequence,
    split_by_participant,
    zscore,
)


def meta(pid="P001", task=1, axis="x", eye="L"):
    return SequenceMeta(pid, task, axis, eye)


class TestGazeSequence:
    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            GazeSequence([])

    def test_rejects_infinity(self):
        with pytest.raises(ValueError, match="infinity"):
            GazeSequence([1.0, np.inf, 2.0])

    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            GazeSequence([1.0], rate_hz=0.0)

    def test_missing_marker_is_nan(self):
        seq = GazeSequence([1.0, np.nan, 3.0])
        assert seq.n_missing == 1
        assert not seq.is_complete()
        assert list(seq.observed_values()) == [1.0, 3.0]

    def test_samples_are_immutable(self):
        seq = GazeSequence([1.0, 2.0])
        with pytest.raises(ValueError):
            seq.samples[0] = 9.0

    def test_construction_copies_input(self):
        buf = np.array([1.0, 2.0])
        seq = GazeSequence(buf)
        buf[0] = 99.0
        assert seq.samples[0] == 1.0


class TestMissingMask:
    def test_strictly_increasing_required(self):
        with pytest.raises(ValueError):
            MissingMask(np.array([3, 3, 5]), 10)

    def test_bounds_checked(self):
        with pytest.raises(ValueError):
            MissingMask(np.array([0, 10]), 10)

    def test_runs(self):
        m = MissingMask(np.array([2, 3, 4, 8, 9]), 12)
        assert m.runs() == [(2, 5), (8, 10)]
        assert m.n_imp == 5

    def test_from_indices_dedupes_and_sorts(self):
        m = MissingMask.from_indices([5, 2, 5, 3], 10)
        assert list(m.indices) == [2, 3, 5]

    def test_roundtrip_bool(self):
        miss = np.zeros(7, dtype=bool)
        miss[[1, 4, 5]] = True
        assert np.array_equal(MissingMask.from_bool(miss).to_bool(), miss)


class TestZscore:
    def test_two_point_example(self):
        # population std of [0, 2] is 1, mean is 1
        z, p = zscore(GazeSequence([0.0, 2.0]))
        assert np.allclose(z.samples, [-1.0, 1.0])
        assert p.mean == 1.0 and p.std == 1.0

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError, match="zero-variance"):
            zscore(GazeSequence([2.0, 2.0, 2.0, 2.0]))

    def test_all_missing_rejected(self):
        with pytest.raises(ValueError, match="all-missing"):
            zscore(GazeSequence([np.nan, np.nan]))

    def test_already_standardized_fixed_point(self):
        rng = np.random.default_rng(0)
        x = rng.normal(0, 1, 500)
        x = (x - x.mean()) / x.std()
        _, p = zscore(GazeSequence(x))
        assert abs(p.mean) < 1e-9 and abs(p.std - 1.0) < 1e-9

    def test_missing_positions_stay_missing(self):
        z, _ = zscore(GazeSequence([1.0, np.nan, 3.0]))
        assert np.isnan(z.samples[1])
        assert not np.isnan(z.samples[[0, 2]]).any()

    def test_roundtrip_identity(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            x = rng.normal(rng.uniform(-5, 5), rng.uniform(0.1, 4), 100)
            x[rng.random(100) < 0.2] = np.nan
            if np.isnan(x).all() or np.nanstd(x) == 0:
                continue
            seq = GazeSequence(x)
            z, p = zscore(seq)
            back = p.invert(z)
            obs = ~seq.missing
            assert np.allclose(back.samples[obs], seq.samples[obs], atol=1e-9)

    def test_shared_params_reused(self):
        seq = GazeSequence([0.0, 2.0])
        z, _ = zscore(seq, params=NormalizationParams(1.0, 2.0))
        assert np.allclose(z.samples, [-0.5, 0.5])


def _dataset(n_participants=6, n_per=2):
    seqs = []
    rng = np.random.default_rng(0)
    for p in range(n_participants):
        for k in range(n_per):
            seqs.append(
                GazeSequence(
                    rng.normal(0, 1, 50),
                    meta=meta(f"P{p:03d}", task=k + 1, axis="x", eye="L"),
                )
            )
    return Dataset(tuple(seqs))


class TestSplit:
    def test_deterministic(self):
        ds = _dataset()
        a = split_by_participant(ds, 4, 2, seed=3)
        b = split_by_participant(ds, 4, 2, seed=3)
        assert a.split == b.split

    def test_disjoint_and_complete(self):
        ds = _dataset()
        out = split_by_participant(ds, 4, 2, seed=3)
        train = {p for p, s in out.split.items() if s == "train"}
        test = {p for p, s in out.split.items() if s == "test"}
        assert not (train & test)
        assert len(train) == 4 and len(test) == 2
        # with n_train + n_test == participants, every sequence is assigned
        assert all(s.meta.participant in out.split for s in out.sequences)

    def test_too_few_participants(self):
        with pytest.raises(ValueError, match="available"):
            split_by_participant(_dataset(), 5, 2, seed=0)

    def test_zero_zero_on_nonempty_is_error(self):
        with pytest.raises(ValueError, match="unassigned"):
            split_by_participant(_dataset(), 0, 0, seed=0)

    def test_subset_access(self):
        out = split_by_participant(_dataset(), 4, 2, seed=3)
        assert len(out.subset("train")) == 8
        assert len(out.subset("test")) == 4


class TestFileIO:
    def test_documented_format(self, tmp_path):
        f = tmp_path / "s.csv"
        f.write_text(
            "# participant=P001 task=SPT3 axis=y eye=R rate_hz=1000.0\n"
            "0,1.0\n1,NA\n2,3.0\n"
        )
        seq = load_sequence(f)
        assert np.array_equal(seq.samples, [1.0, np.nan, 3.0], equal_nan=True)
        assert seq.meta == SequenceMeta("P001", 3, "y", "R")
        assert seq.rate_hz == 1000.0

    def test_empty_directory_is_empty_dataset(self, tmp_path):
        ds = load_sequences(tmp_path)
        assert len(ds) == 0

    def test_text_value_names_line(self, tmp_path):
        f = tmp_path / "s.csv"
        f.write_text(
            "# participant=P1 task=SPT1 axis=x eye=L rate_hz=1000.0\n0,1.0\n1,bogus\n"
        )
        with pytest.raises(FormatError, match=r"s\.csv:3"):
            load_sequence(f)

    def test_wrong_column_count(self, tmp_path):
        f = tmp_path / "s.csv"
        f.write_text(
            "# participant=P1 task=SPT1 axis=x eye=L rate_hz=1000.0\n0,1.0,extra\n"
        )
        with pytest.raises(FormatError, match="2 columns"):
            load_sequence(f)

    def test_empty_file(self, tmp_path):
        f = tmp_path / "s.csv"
        f.write_text("")
        with pytest.raises(FormatError, match="empty"):
            load_sequence(f)

    def test_infinity_becomes_missing_on_load(self, tmp_path):
        f = tmp_path / "s.csv"
        f.write_text(
            "# participant=P1 task=SPT1 axis=x eye=L rate_hz=1000.0\n0,1.0\n1,inf\n2,-inf\n"
        )
        seq = load_sequence(f)
        assert seq.n_missing == 2

    def test_save_load_roundtrip_lossless(self, tmp_path):
        rng = np.random.default_rng(7)
        x = rng.normal(0, 3, 200)
        x[rng.random(200) < 0.1] = np.nan
        seq = GazeSequence(x, rate_hz=500.0, meta=meta("HG032", 12, "y", "R"))
        save_sequence(seq, tmp_path / "s.csv")
        back = load_sequence(tmp_path / "s.csv")
        assert np.array_equal(back.samples, seq.samples, equal_nan=True)
        assert back.meta == seq.meta
        assert back.rate_hz == seq.rate_hz

    def test_dataset_roundtrip_with_manifest(self, tmp_path):
        ds = split_by_participant(_dataset(), 4, 2, seed=1)
        save_dataset(ds, tmp_path)
        back = load_dataset(tmp_path)
        assert back.split == ds.split
        assert len(back) == len(ds)
        for a, b in zip(
            sorted(ds.sequences, key=lambda s: s.meta.filename()),
            sorted(back.sequences, key=lambda s: s.meta.filename()),
        ):
            assert np.array_equal(a.samples, b.samples, equal_nan=True)
