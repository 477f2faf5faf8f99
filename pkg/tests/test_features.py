import numpy as np
import pytest

from errors import DomainError
from features_lib import (
    FEATURE_KINDS,
    SCALE_ORDER,
    Scale,
    Window,
    avg_consecutive_diff,
    avg_residence_time,
    check_window_sizes,
    dft,
    dominant_frequency,
    extract_instances,
    feature_index,
    feature_indices,
    feature_names,
    majority_label,
    min_samples,
    rss_variance,
    segment_windows,
    signal_energy,
    unique_cell_count,
    window_features,
)
from preprocess_lib import smooth_pingpong
from trace_model import FEATURE_COUNT, Mode, Sample, Segment, Trace


def window_of(ids, rss=None, nominal_len_s=None):
    rss = [-70.0] * len(ids) if rss is None else rss
    samples = tuple(Sample(i * 1000, cid, float(v)) for i, (cid, v) in enumerate(zip(ids, rss)))
    length = nominal_len_s or len(ids)
    return Window(0, length * 1000, samples, length)


def naive_dft(x):
    n = len(x)
    m = np.arange(n)
    return np.abs(np.exp(-2j * np.pi * np.outer(m, m) / n) @ np.asarray(x, dtype=complex))


class TestSegmentWindows:
    def test_exact_division(self, make_trace):
        windows = segment_windows(make_trace([1] * 60), 10)
        assert len(windows) == 6
        assert all(len(w.samples) == 10 and w.valid for w in windows)
        assert [w.start_ms for w in windows] == [i * 10000 for i in range(6)]

    def test_partial_tail_dropped(self, make_trace):
        windows = segment_windows(make_trace([1] * 65), 10)
        assert len(windows) == 6
        assert sum(len(w.samples) for w in windows) == 60

    def test_sparse_window_is_invalid(self):
        timestamps = [0, 1000, 2000, 3000, 5000, 6000, 8000, 9000]
        trace = Trace([Sample(t, 1, -70.0) for t in timestamps])
        windows = segment_windows(trace, 10)
        assert len(windows) == 1
        assert len(windows[0].samples) == 8
        assert not windows[0].valid

    def test_aligned_to_first_timestamp(self, make_trace):
        windows = segment_windows(make_trace([1] * 20, t0=123456), 10)
        assert [w.start_ms for w in windows] == [123456, 133456]
        assert all(w.end_ms - w.start_ms == 10000 for w in windows)

    def test_empty_trace(self):
        assert segment_windows(Trace(), 10) == []

    def test_min_samples(self):
        assert [min_samples(n) for n in (10, 30, 60)] == [9, 27, 54]


class TestTimeDomainFeatures:
    def test_unique_cells(self):
        assert unique_cell_count(window_of(["A"] * 5)) == 1
        assert unique_cell_count(window_of(["A", "B", "A"])) == 2

    def test_residence_time(self):
        assert avg_residence_time(window_of(["A"] * 10)) == 10.0
        assert avg_residence_time(window_of(["A"] * 5 + ["B"] * 5)) == 5.0

    def test_variance(self):
        assert rss_variance(window_of([1] * 4), Scale.LOGARITHMIC) == 0.0
        assert rss_variance(window_of([1, 1], [-80, -82]), Scale.LOGARITHMIC) == pytest.approx(1.0)

    def test_consecutive_diff(self):
        assert avg_consecutive_diff(window_of([1] * 4), Scale.LOGARITHMIC) == 0.0
        assert avg_consecutive_diff(window_of([1] * 3, [-80, -82, -79]), Scale.LOGARITHMIC) == pytest.approx(2.5)
        assert avg_consecutive_diff(window_of([1], [-80]), Scale.LOGARITHMIC) == 0.0

    def test_linear_scale_uses_milliwatts(self):
        window = window_of([1, 1], [-30, -20])
        # 0.001 mW and 0.01 mW
        assert avg_consecutive_diff(window, Scale.LINEAR) == pytest.approx(0.009)
        assert rss_variance(window, Scale.LINEAR) == pytest.approx(0.0045 ** 2)

    def test_scales_carry_different_information(self):
        near = window_of([1] * 4, [-59, -61, -59, -61])
        far = window_of([1] * 4, [-97, -103, -97, -103])
        assert rss_variance(near, Scale.LOGARITHMIC) < rss_variance(far, Scale.LOGARITHMIC)
        assert rss_variance(near, Scale.LINEAR) > rss_variance(far, Scale.LINEAR)

    def test_cell_features_are_scale_invariant(self, rng):
        for _ in range(20):
            window = window_of(list(rng.integers(0, 3, size=30)), rng.uniform(-110, -60, size=30))
            log = window_features(window, Scale.LOGARITHMIC)
            linear = window_features(window, Scale.LINEAR)
            assert log[:2] == linear[:2]


class TestDft:
    def test_constant_signal(self):
        spectrum = dft([-3.0] * 12)
        assert spectrum.bin_magnitudes[0] == pytest.approx(36.0)
        assert np.all(spectrum.bin_magnitudes[1:] < 1e-9)

    def test_cosine(self):
        n, k0 = 16, 3
        signal = np.cos(2 * np.pi * k0 * np.arange(n) / n)
        magnitudes = dft(signal).bin_magnitudes
        assert magnitudes[3] == pytest.approx(8.0)
        assert magnitudes[13] == pytest.approx(8.0)
        others = np.delete(magnitudes, [3, 13])
        assert np.all(others < 1e-9)

    def test_bin_width(self):
        assert dft(np.zeros(20), sample_rate_hz=2.0).bin_width_hz == pytest.approx(0.1)

    def test_matches_naive_dft_for_every_length(self, rng):
        for n in range(1, 65):
            for _ in range(200):
                x = rng.normal(size=n)
                assert np.max(np.abs(dft(x).bin_magnitudes - naive_dft(x))) < 1e-9

    def test_empty_signal(self):
        with pytest.raises(DomainError):
            dft([])


class TestFrequencyFeatures:
    def test_flat_window(self):
        window = window_of([1] * 60, [-85] * 60)
        assert dominant_frequency(window, Scale.LOGARITHMIC) == 0.0
        assert dominant_frequency(window, Scale.LINEAR) == 0.0
        assert signal_energy(window, Scale.LOGARITHMIC) == 0.0

    def test_single_tone(self):
        i = np.arange(60)
        window = window_of([1] * 60, -80 + 3 * np.cos(2 * np.pi * 6 * i / 60))
        assert dominant_frequency(window, Scale.LOGARITHMIC) == pytest.approx(0.1)

    def test_stronger_tone_wins(self):
        i = np.arange(60)
        rss = -80 + 3 * np.cos(2 * np.pi * 6 * i / 60) + np.sin(2 * np.pi * 12 * i / 60)
        assert dominant_frequency(window_of([1] * 60, rss), Scale.LOGARITHMIC) == pytest.approx(0.1)

    def test_nearly_flat_log_window(self):
        # residual energy is 30 * amplitude**2 for a 60-sample tone
        tone = np.cos(2 * np.pi * 6 * np.arange(60) / 60)
        below = window_of([1] * 60, -85 + 1e-7 * tone)
        above = window_of([1] * 60, -85 + 1e-6 * tone)
        assert signal_energy(below, Scale.LOGARITHMIC) < 1e-12
        assert dominant_frequency(below, Scale.LOGARITHMIC) == 0.0
        assert signal_energy(above, Scale.LOGARITHMIC) > 1e-12
        assert dominant_frequency(above, Scale.LOGARITHMIC) == pytest.approx(0.1)

    def test_nearly_flat_linear_window(self):
        tone = np.cos(2 * np.pi * 6 * np.arange(60) / 60)
        # a 1 dB swing at -100 dBm is about 1e-11 mW
        below = window_of([1] * 60, -100 + tone)
        above = window_of([1] * 60, -50 + tone)
        assert signal_energy(below, Scale.LINEAR) < 1e-12
        assert dominant_frequency(below, Scale.LINEAR) == 0.0
        assert dominant_frequency(below, Scale.LOGARITHMIC) == pytest.approx(0.1)
        assert signal_energy(above, Scale.LINEAR) > 1e-12
        assert dominant_frequency(above, Scale.LINEAR) == pytest.approx(0.1)

    def test_parseval(self, rng):
        for _ in range(200):
            n = int(rng.integers(2, 61))
            rss = rng.normal(-85, 6, size=n)
            window = window_of([1] * n, rss, nominal_len_s=60)
            for scale in SCALE_ORDER:
                values = window.values(scale)
                expected = float(np.sum((values - values.mean()) ** 2))
                assert signal_energy(window, scale) == pytest.approx(expected, abs=1e-9)

    def test_feature_ranges(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 61))
            window = window_of(list(rng.integers(0, 4, size=n)), rng.uniform(-113, -51, size=n), nominal_len_s=60)
            for scale in SCALE_ORDER:
                assert signal_energy(window, scale) >= 0.0
                assert rss_variance(window, scale) >= 0.0
                # n samples over 60 s
                assert 0.0 <= dominant_frequency(window, scale) <= (n / 60) / 2 + 1e-12


class TestCanonicalLayout:
    def test_feature_index_order(self):
        assert feature_index(0, Scale.LOGARITHMIC, "unique_cells") == 0
        assert feature_index(0, Scale.LINEAR, "unique_cells") == 6
        assert feature_index(1, Scale.LOGARITHMIC, "residence_time") == 13
        assert feature_index(2, Scale.LINEAR, "signal_energy") == 35

    def test_feature_names(self):
        names = feature_names()
        assert len(names) == FEATURE_COUNT
        assert names[0] == "w10_log_unique_cells"
        assert names[-1] == "w60_linear_signal_energy"

    def test_feature_indices(self):
        log_only = feature_indices([Scale.LOGARITHMIC])
        assert len(log_only) == 18
        assert all((i // len(FEATURE_KINDS)) % 2 == 0 for i in log_only)
        assert feature_indices(SCALE_ORDER) == tuple(range(FEATURE_COUNT))
        assert feature_indices(SCALE_ORDER, windows=[10, 60]) == tuple(range(12)) + tuple(range(24, 36))

    def test_unknown_window_subset(self):
        with pytest.raises(DomainError):
            feature_indices(SCALE_ORDER, windows=[20])

    @pytest.mark.parametrize("sizes", [(10, 30), (30, 10, 60), (10, 25, 60), (0, 30, 60), (10, 30, 60, 120)])
    def test_bad_window_sizes(self, sizes):
        with pytest.raises(DomainError):
            check_window_sizes(sizes)


class TestMajorityLabel:
    def test_agreement_threshold(self):
        assert majority_label([Mode.WALKING] * 8 + [Mode.DRIVING] * 2) is Mode.WALKING
        assert majority_label([Mode.WALKING] * 7 + [Mode.DRIVING] * 3) is None

    def test_unlabeled_samples_are_ignored(self):
        assert majority_label([None] * 50 + [Mode.DRIVING] * 10) is Mode.DRIVING
        assert majority_label([None] * 5) is None

    def test_tie_goes_to_earlier_mode(self):
        assert majority_label([Mode.DRIVING, Mode.WALKING], agreement=0.5) is Mode.WALKING


class TestExtractInstances:
    def test_constant_stationary_minute(self, make_trace):
        instances = extract_instances(make_trace([5] * 60, rss=[-80] * 60, mode=Mode.STATIONARY))
        assert len(instances) == 1
        inst = instances[0]
        assert inst.label is Mode.STATIONARY
        assert inst.window_start_ms == 0
        for pos, length in enumerate((10, 30, 60)):
            for scale in SCALE_ORDER:
                base = feature_index(pos, scale, "unique_cells")
                assert inst.features[base:base + 6] == pytest.approx((1.0, float(length), 0.0, 0.0, 0.0, 0.0), abs=1e-12)

    def test_two_minutes(self, make_trace):
        instances = extract_instances(make_trace([5] * 120, mode=Mode.WALKING))
        assert [i.window_start_ms for i in instances] == [0, 60000]

    def test_mixed_labels_stay_unlabeled(self, make_trace):
        trace = make_trace([5] * 60)
        trace = Trace(trace.samples, [Segment(0, 42000, Mode.WALKING), Segment(42000, 60001, Mode.DRIVING)])
        assert extract_instances(trace)[0].label is None

    def test_sub_window_features_are_averaged(self, make_trace):
        # One handoff 15 s in: the first 10 s window has one cell, the second two
        ids = [1] * 15 + [2] * 45
        inst = extract_instances(make_trace(ids))[0]
        assert inst.features[feature_index(0, Scale.LOGARITHMIC, "unique_cells")] == pytest.approx(7 / 6)
        assert inst.features[feature_index(1, Scale.LOGARITHMIC, "unique_cells")] == pytest.approx(1.5)
        assert inst.features[feature_index(2, Scale.LOGARITHMIC, "unique_cells")] == 2.0
        assert inst.features[feature_index(2, Scale.LOGARITHMIC, "residence_time")] == 30.0

    def test_gap_in_sub_window_skips_macro_window(self):
        timestamps = [t * 1000 for t in range(60) if not 2 <= t < 6]
        trace = Trace([Sample(t, 1, -70.0) for t in timestamps])
        assert extract_instances(trace) == []

    def test_custom_window_sizes(self, make_trace):
        instances = extract_instances(make_trace([1] * 120), (5, 20, 40))
        assert len(instances) == 3
        assert instances[0].features[feature_index(2, Scale.LOGARITHMIC, "residence_time")] == 40.0


class TestSyntheticTrends:
    """Mean feature values over >= 100 synthetic 60 s windows per mode"""

    @pytest.fixture(scope="class")
    def per_mode(self, small_suite):
        rows = {mode: [] for mode in Mode}
        for _, trace in small_suite:
            for inst in extract_instances(smooth_pingpong(trace)):
                rows[inst.label].append(inst.features)
        return {mode: np.array(values) for mode, values in rows.items()}

    def mean(self, per_mode, mode, scale, kind):
        return float(per_mode[mode][:, feature_index(2, scale, kind)].mean())

    def test_enough_windows(self, per_mode):
        assert all(len(values) >= 100 for values in per_mode.values())

    @pytest.mark.parametrize("kind", ["unique_cells", "rss_variance", "consecutive_diff", "signal_energy"])
    @pytest.mark.parametrize("scale", SCALE_ORDER)
    def test_increasing_with_speed(self, per_mode, kind, scale):
        stationary, walking, driving = (self.mean(per_mode, m, scale, kind) for m in
                                        (Mode.STATIONARY, Mode.WALKING, Mode.DRIVING))
        assert driving > walking > stationary

    def test_residence_decreasing_with_speed(self, per_mode):
        stationary, walking, driving = (self.mean(per_mode, m, Scale.LOGARITHMIC, "residence_time") for m in
                                        (Mode.STATIONARY, Mode.WALKING, Mode.DRIVING))
        assert stationary > walking > driving
