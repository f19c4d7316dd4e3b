import numpy as np
import pandas as pd
import pytest

from data import (
    SECONDS_PER_HOUR,
    SYNTHETIC_CYCLES,
    SYNTHETIC_LEVEL,
    TWO_WEEKS_HOURS,
    IngestReport,
    PreparedData,
    SeriesFrame,
    clean_frame,
    count_windows,
    load_series_csv,
    make_windows,
    median_offset,
    merge_columns,
    minmax_fit_apply,
    moving_median_scale,
    prepare_dataset,
    split_train_test,
    synthetic_frame,
)
from errors import ContractError, DegenerateWindowError, DimensionError


class TestMovingMedian:
    def test_constant_series_scales_to_one(self):
        out = moving_median_scale(np.full(50, 7.5), median_window=10, shift=3)
        assert len(out) == 50 - median_offset(10, 3)
        np.testing.assert_array_equal(out, 1.0)

    def test_two_weeks_of_hours(self):
        assert TWO_WEEKS_HOURS == 336

    def test_hand_example(self):
        x = np.arange(1.0, 11.0)
        out = moving_median_scale(x, median_window=3, shift=1)
        # out[3] = x[3] / median(x[0..2]) = 4 / 2
        assert out[0] == 2.0
        assert len(out) == 7
        assert out[-1] == pytest.approx(10.0 / 8.0)

    def test_even_window_uses_mean_of_central_values(self):
        x = np.array([1.0, 3.0, 10.0, 20.0])
        out = moving_median_scale(x, median_window=2, shift=1)
        np.testing.assert_allclose(out, [10.0 / 2.0, 20.0 / 6.5])

    def test_shift_pushes_the_window_back(self):
        x = np.array([1.0, 2.0, 4.0, 8.0, 16.0, 32.0])
        out = moving_median_scale(x, median_window=1, shift=2)
        np.testing.assert_array_equal(out, [4.0, 4.0, 4.0, 4.0])

    def test_perturbation_only_reaches_forward(self, rng):
        x = rng.uniform(1.0, 2.0, size=200)
        W, H, t = 12, 4, 120
        base = moving_median_scale(x, W, H)
        perturbed = x.copy()
        perturbed[t] *= 3.0
        changed = moving_median_scale(perturbed, W, H)
        offset = median_offset(W, H)
        for s in range(offset, t + H):
            if s != t:
                assert changed[s - offset] == base[s - offset], s

    def test_truncated_history_gives_identical_values(self, rng):
        x = rng.uniform(1.0, 2.0, size=150)
        W, H = 24, 3
        full = moving_median_scale(x, W, H)
        offset = median_offset(W, H)
        for t in (offset, 60, 149):
            assert moving_median_scale(x[:t + 1], W, H)[-1] == full[t - offset]

    def test_nonpositive_median_names_the_index(self):
        x = np.array([0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 4.0])
        with pytest.raises(DegenerateWindowError) as info:
            moving_median_scale(x, median_window=3, shift=1)
        assert info.value.index == 3
        assert info.value.median == 0.0

    def test_too_short(self):
        with pytest.raises(ContractError):
            moving_median_scale(np.ones(5), median_window=4, shift=2)

    def test_rejects_matrices(self):
        with pytest.raises(DimensionError):
            moving_median_scale(np.ones((10, 2)), 3, 1)


class TestMinMax:
    def test_examples(self):
        train, test, maxima = minmax_fit_apply([0.0, 2.0, 4.0], [6.0])
        np.testing.assert_array_equal(train, [0.0, 0.5, 1.0])
        np.testing.assert_array_equal(test, [1.5])
        assert maxima == 4.0

    def test_constant_train_maps_to_one(self):
        train, _, _ = minmax_fit_apply([3.0, 3.0, 3.0], [1.0])
        np.testing.assert_array_equal(train, 1.0)

    def test_per_column_maxima(self):
        train, _, maxima = minmax_fit_apply(np.array([[1.0, 10.0], [2.0, 5.0]]), np.zeros((1, 2)))
        np.testing.assert_array_equal(maxima, [2.0, 10.0])
        np.testing.assert_array_equal(train, [[0.5, 1.0], [1.0, 0.5]])

    def test_nonpositive_max(self):
        with pytest.raises(ContractError):
            minmax_fit_apply([-1.0, 0.0], [1.0])


class TestWindows:
    def test_count_and_alignment(self):
        values = np.arange(10.0)
        X, y = make_windows(values, seq_len=3, horizon=2)
        assert X.shape == (6, 3, 1) and y.shape == (6, 2)
        assert count_windows(10, 3, 2) == 6
        np.testing.assert_array_equal(X[0, :, 0], [0.0, 1.0, 2.0])
        np.testing.assert_array_equal(y[0], [3.0, 4.0])
        assert y[-1, -1] == values[-1]

    def test_horizon_one(self):
        _, y = make_windows(np.arange(8.0), seq_len=4, horizon=1)
        assert y.shape == (4, 1)

    def test_inputs_precede_targets(self, small_frame):
        X, y = make_windows(small_frame.timestamps.astype(np.float64), seq_len=5, horizon=3)
        assert np.all(X[:, -1, 0] < y[:, 0])

    def test_uses_frame_target_column(self, small_frame):
        frame = SeriesFrame(small_frame.timestamps, small_frame.values, small_frame.columns, "ETHUSDT")
        X, y = make_windows(frame, seq_len=4, horizon=2)
        assert X.shape[2] == 2
        np.testing.assert_array_equal(y[0], small_frame.values[4:6, 1])

    def test_too_short(self):
        with pytest.raises(ContractError):
            make_windows(np.arange(4.0), seq_len=3, horizon=2)


class TestSplit:
    @pytest.mark.parametrize("n, expected", [(100, (80, 20)), (5, (4, 1)), (26000, (20800, 5200))])
    def test_floor_rule(self, n, expected):
        train, test = split_train_test(list(range(n)))
        assert (len(train), len(test)) == expected
        assert train[-1] + 1 == test[0]

    def test_needs_two_samples(self):
        with pytest.raises(ContractError):
            split_train_test([1])


class TestIngest:
    def test_csv_roundtrip(self, tmp_path, small_frame):
        path = tmp_path / "frame.csv"
        small_frame.to_csv(path)
        frame, report = load_series_csv(path, "BTCUSDT")
        np.testing.assert_array_equal(frame.values, small_frame.values)
        np.testing.assert_array_equal(frame.timestamps, small_frame.timestamps)
        assert frame.columns == ("BTCUSDT", "ETHUSDT")
        assert report.rows_dropped == 0 and report.missing_hours == 0

    def test_rows_with_missing_values_are_dropped(self, tmp_path):
        path = tmp_path / "frame.csv"
        path.write_text(
            "timestamp,BTCUSDT,ETHUSDT\n"
            f"{100 * SECONDS_PER_HOUR},1.0,2.0\n"
            f"{101 * SECONDS_PER_HOUR},,2.0\n"
            f"{102 * SECONDS_PER_HOUR},1.5,2.5\n"
        )
        frame, report = load_series_csv(path)
        assert len(frame) == 2
        assert (report.rows_read, report.rows_dropped, report.missing_hours) == (3, 1, 1)
        np.testing.assert_array_equal(frame.timestamps, [100, 102])

    def test_unsorted_and_duplicated_rows(self):
        df = pd.DataFrame({"timestamp": [7200, 3600, 7200], "A": [2.0, 1.0, 9.0]})
        cleaned, report = clean_frame(df)
        assert cleaned["timestamp"].tolist() == [3600, 7200]
        assert cleaned["A"].tolist() == [1.0, 2.0]
        assert report.rows_dropped == 1

    def test_timestamps_must_sit_on_hours(self):
        with pytest.raises(ContractError):
            clean_frame(pd.DataFrame({"timestamp": [3600, 5000], "A": [1.0, 2.0]}))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ContractError):
            load_series_csv(tmp_path / "absent.csv")

    def test_merge_drops_hours_missing_in_any_column(self):
        hours = np.arange(100, 110)
        a = pd.Series(np.linspace(1, 2, 10), index=hours)
        b = pd.Series(np.linspace(3, 4, 10), index=hours).drop(105)
        frame, report = merge_columns({"A": a, "B": b}, "A")
        assert len(frame) == 9
        assert 105 not in frame.timestamps
        assert (report.rows_read, report.rows_dropped, report.missing_hours) == (10, 1, 1)

    def test_unknown_target(self, small_frame):
        with pytest.raises(ContractError):
            SeriesFrame(small_frame.timestamps, small_frame.values, small_frame.columns, "XRPUSDT")


class TestPrepare:
    def test_window_counts(self, small_frame):
        report = IngestReport()
        prepared = prepare_dataset(small_frame, seq_len=6, horizon=1, median_window=24, report=report)
        # 1000 rows - 24 unscaled -> 976 usable -> 970 windows -> 776 / 194
        assert len(prepared.X_train) == 776 and len(prepared.X_test) == 194
        assert prepared.X_train.shape[1:] == (6, 2)
        assert (report.train_windows, report.test_windows) == (776, 194)
        assert (report.train_hours, report.test_hours) == (782, 194)

    def test_training_values_lie_in_unit_interval(self, small_frame):
        prepared = prepare_dataset(small_frame, seq_len=6, horizon=3, median_window=24)
        assert prepared.X_train.min() >= 0.0
        assert prepared.X_train.max() <= 1.0 and prepared.y_train.max() <= 1.0
        assert max(prepared.X_train[:, :, 0].max(), prepared.y_train.max()) == 1.0

    def test_is_deterministic(self, small_frame):
        a = prepare_dataset(small_frame, seq_len=6, horizon=2, median_window=24)
        b = prepare_dataset(small_frame, seq_len=6, horizon=2, median_window=24)
        for name in ("X_train", "y_train", "X_test", "y_test"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_future_spike_leaves_earlier_windows_unchanged(self, small_frame):
        horizon, spike = 3, 900
        values = small_frame.values.copy()
        values[spike, :] *= 50.0
        spiked = small_frame.with_values(values)
        base = prepare_dataset(small_frame, seq_len=6, horizon=horizon, median_window=24)
        after = prepare_dataset(spiked, seq_len=6, horizon=horizon, median_window=24)

        cutoff = small_frame.timestamps[spike] - horizon
        ends = np.concatenate([base.train_end_hours, base.test_end_hours])
        X_base = np.concatenate([base.X_train, base.X_test])
        X_after = np.concatenate([after.X_train, after.X_test])
        early = ends < cutoff
        assert early.sum() > 800
        np.testing.assert_array_equal(X_after[early], X_base[early])
        assert not np.array_equal(X_after[~early], X_base[~early])

    def test_training_spike_rescales_earlier_windows_uniformly(self, small_frame):
        horizon, spike = 3, 300
        values = small_frame.values.copy()
        values[spike, :] *= 50.0
        spiked = small_frame.with_values(values)
        offset = median_offset(24, horizon)
        for j in range(len(small_frame.columns)):
            np.testing.assert_array_equal(
                moving_median_scale(values[:, j], 24, horizon)[: spike - offset],
                moving_median_scale(small_frame.values[:, j], 24, horizon)[: spike - offset],
            )

        base = prepare_dataset(small_frame, seq_len=6, horizon=horizon, median_window=24)
        after = prepare_dataset(spiked, seq_len=6, horizon=horizon, median_window=24)
        max_base = np.array([base.scaler.maxima[c] for c in base.columns])
        max_after = np.array([after.scaler.maxima[c] for c in after.columns])
        assert np.all(max_after > max_base)

        early = base.train_end_hours < small_frame.timestamps[spike] - horizon
        assert early.sum() > 250
        X_base, X_after = base.X_train[early], after.X_train[early]
        assert not np.array_equal(X_after, X_base)
        np.testing.assert_allclose(X_after * max_after, X_base * max_base, rtol=1e-14, atol=0)

    def test_end_hours_follow_windows(self, small_frame):
        prepared = prepare_dataset(small_frame, seq_len=6, horizon=1, median_window=24)
        offset = median_offset(24, 1)
        assert prepared.train_end_hours[0] == small_frame.timestamps[offset + 5]
        assert prepared.test_end_hours[0] == prepared.train_end_hours[-1] + 1

    def test_too_few_rows(self):
        with pytest.raises(ContractError):
            prepare_dataset(synthetic_frame(40), seq_len=15, horizon=1, median_window=24)

    def test_npz_roundtrip(self, tmp_path, small_frame):
        prepared = prepare_dataset(small_frame, seq_len=6, horizon=2, median_window=24)
        prepared.save(tmp_path / "prepared.npz")
        loaded = PreparedData.load(tmp_path / "prepared.npz")
        np.testing.assert_array_equal(loaded.X_test, prepared.X_test)
        assert loaded.scaler.maxima == prepared.scaler.maxima
        assert loaded.columns == prepared.columns
        assert loaded.matches(6, 2, 24, 0.8, "BTCUSDT")
        assert not loaded.matches(6, 3, 24, 0.8, "BTCUSDT")

    def test_matches_checks_source_and_columns(self, tmp_path, small_frame):
        prepared = prepare_dataset(small_frame, seq_len=6, horizon=2, median_window=24)
        prepared.source, prepared.source_digest = "frame.csv", "ab" * 32
        prepared.save(tmp_path / "prepared.npz")
        loaded = PreparedData.load(tmp_path / "prepared.npz")
        assert (loaded.source, loaded.source_digest) == ("frame.csv", "ab" * 32)
        assert loaded.matches(6, 2, 24, 0.8, "BTCUSDT", source_digest="ab" * 32, columns=["ETHUSDT", "BTCUSDT"])
        assert not loaded.matches(6, 2, 24, 0.8, "BTCUSDT", source_digest="cd" * 32)
        assert not loaded.matches(6, 2, 24, 0.8, "BTCUSDT", columns=["BTCUSDT", "SOLUSDT"])


class TestSynthetic:
    def test_deterministic_and_positive(self):
        a, b = synthetic_frame(800, seed=4), synthetic_frame(800, seed=4)
        np.testing.assert_array_equal(a.values, b.values)
        assert a.values.min() > 0
        assert a.columns == ("SYN0", "SYN1") and a.target_column == "SYN0"

    def test_seed_changes_noise(self):
        assert not np.array_equal(synthetic_frame(100, seed=0).values, synthetic_frame(100, seed=1).values)

    def test_cycle_knowledge_beats_last_value(self):
        frame = synthetic_frame(5000, seed=0, names=("BTCUSDT", "ETHUSDT"))
        x = frame.column("BTCUSDT")
        t = np.arange(len(x), dtype=np.float64)
        level = SYNTHETIC_LEVEL + sum(amp * np.sin(2 * np.pi * t / period) for period, amp in SYNTHETIC_CYCLES)

        def r2(pred, true):
            return 1 - np.sum((true - pred) ** 2) / np.sum((true - true.mean()) ** 2)

        oracle = level[1:] + 0.5 * (x[:-1] - level[:-1])
        last_value = r2(x[:-1], x[1:])
        assert 0.80 < last_value < 0.87
        assert r2(oracle, x[1:]) > 0.96
        # six hours on the half-daily cycle is in anti-phase
        assert r2(x[:-6], x[6:]) < 0.3
