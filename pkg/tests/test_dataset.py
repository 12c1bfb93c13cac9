import numpy as np
import pytest

from pavegraph.dataset import (
    FEATURE_NAMES,
    DataError,
    SnapshotSeries,
    SplitSpec,
    apply_standardizer,
    assign_windows,
    build_windows,
    default_split,
    drop_features,
    fit_standardizer,
    load_snapshots,
    read_observation_file,
)
from pavegraph.graph import load_graph


def make_records(node_ids, years, rng):
    records = []
    for year in years:
        for seg in node_ids:
            rec = {"segment_id": seg, "year": year}
            for name in FEATURE_NAMES:
                rec[name] = float(rng.uniform(0, 10))
            rec["pci"] = float(rng.uniform(40, 95))
            records.append(rec)
    return records


@pytest.fixture
def small_series():
    rng = np.random.default_rng(0)
    graph = load_graph(["a", "b", "c"], [("a", "b")])
    records = make_records(["a", "b", "c"], [2021, 2022, 2023, 2024], rng)
    return graph, load_snapshots(records, graph), records


class TestLoadSnapshots:
    def test_shapes_and_order(self, small_series):
        _, series, _ = small_series
        assert series.years == (2021, 2022, 2023, 2024)
        assert series.features.shape == (4, 3, len(FEATURE_NAMES))
        assert series.targets.shape == (4, 3)

    def test_row_shuffle_invariance(self, small_series):
        graph, series, records = small_series
        shuffled = list(reversed(records))
        series2 = load_snapshots(shuffled, graph)
        np.testing.assert_array_equal(series.features, series2.features)
        np.testing.assert_array_equal(series.targets, series2.targets)

    def test_missing_observation_is_error(self, small_series):
        graph, _, records = small_series
        with pytest.raises(DataError, match=r"missing observations.*'b', 2023"):
            load_snapshots([r for r in records if not (r["segment_id"] == "b" and r["year"] == 2023)], graph)

    def test_pci_out_of_range(self, small_series):
        graph, _, records = small_series
        bad = [dict(r) for r in records]
        bad[0]["pci"] = 103.0
        with pytest.raises(DataError, match=r"PCI outside \[0, 100\]"):
            load_snapshots(bad, graph)

    def test_duplicate_observation(self, small_series):
        graph, _, records = small_series
        with pytest.raises(DataError, match="duplicate observation"):
            load_snapshots(records + [records[0]], graph)

    def test_unknown_segment(self, small_series):
        graph, _, records = small_series
        bad = [dict(r) for r in records]
        bad[0]["segment_id"] = "zz"
        with pytest.raises(Exception, match="unknown segment|missing"):
            load_snapshots(bad, graph)


class TestWindows:
    def test_t0_2_gives_two_samples(self, small_series):
        _, series, _ = small_series
        samples = build_windows(series, 2)
        assert len(samples) == 2
        assert samples[0].input_years == (2021, 2022) and samples[0].target_year == 2023
        assert samples[1].input_years == (2022, 2023) and samples[1].target_year == 2024

    def test_t0_1_gives_three_samples(self, small_series):
        _, series, _ = small_series
        assert len(build_windows(series, 1)) == 3

    def test_t0_too_large(self, small_series):
        _, series, _ = small_series
        with pytest.raises(DataError, match="at least 5 years"):
            build_windows(series, 4)

    def test_window_consistency_reconstructs_series(self, small_series):
        _, series, _ = small_series
        samples = build_windows(series, 2)
        for k, sample in enumerate(samples):
            for step in range(2):
                np.testing.assert_array_equal(
                    sample.inputs[:, step, :], series.features[k + step]
                )
            np.testing.assert_array_equal(sample.target, series.targets[k + 2])

    def test_time_axis_oldest_to_newest(self, small_series):
        _, series, _ = small_series
        sample = build_windows(series, 3)[0]
        assert sample.input_years == (2021, 2022, 2023)
        np.testing.assert_array_equal(sample.inputs[:, 0, :], series.features[0])
        np.testing.assert_array_equal(sample.inputs[:, 2, :], series.features[2])


class TestSplit:
    def test_default_split(self):
        split = default_split((2021, 2022, 2023, 2024))
        assert split.train_years == {2021, 2022}
        assert split.val_years == {2023}
        assert split.test_years == {2024}

    def test_split_ordering_enforced(self):
        with pytest.raises(DataError, match="precede"):
            SplitSpec(frozenset({2023}), frozenset({2022}), frozenset({2024}))
        with pytest.raises(DataError, match="disjoint"):
            SplitSpec(frozenset({2021}), frozenset({2021}), frozenset({2024}))

    def test_assign_windows_four_year_overlap(self, small_series):
        # The window whose inputs are the train years targets the val year
        # and fills both the train and val roles.
        _, series, _ = small_series
        samples = build_windows(series, 2)
        train, val, test = assign_windows(samples, default_split(series.years))
        assert train == [samples[0]]
        assert val == [samples[0]]
        assert test == [samples[1]]


class TestStandardizer:
    def test_two_point_column_population_std(self):
        # column {0, 2}: mean 1, population std 1, transforms to {-1, +1}
        rng = np.random.default_rng(1)
        features = rng.uniform(1, 2, size=(2, 1, len(FEATURE_NAMES)))
        features[0, 0, 0] = 0.0
        features[1, 0, 0] = 2.0
        series = SnapshotSeries(
            years=(2021, 2022), features=features, targets=np.array([[50.0], [60.0]])
        )
        std = fit_standardizer(series, [2021, 2022])
        assert std.feature_means[0] == pytest.approx(1.0)
        assert std.feature_stds[0] == pytest.approx(1.0)
        transformed = std.transform_features(series.features)
        np.testing.assert_allclose(transformed[:, 0, 0], [-1.0, 1.0], atol=1e-12)

    def test_constant_column_clamped(self, small_series):
        _, series, _ = small_series
        features = np.array(series.features)
        features[:, :, 2] = 7.5
        const_series = SnapshotSeries(series.years, features, np.array(series.targets))
        std = fit_standardizer(const_series, [2021, 2022])
        assert std.feature_stds[2] == 1.0
        assert np.all(std.transform_features(const_series.features)[:, :, 2] == 0.0)

    def test_round_trip_identity(self, small_series):
        _, series, _ = small_series
        std = fit_standardizer(series, [2021, 2022])
        x = series.features
        back = std.inverse_transform_features(std.transform_features(x))
        np.testing.assert_allclose(back, x, rtol=1e-9)
        y = series.targets[0]
        np.testing.assert_allclose(
            std.inverse_transform_target(std.transform_target(y)), y, rtol=1e-9
        )

    def test_train_year_columns_zero_mean_unit_std(self, small_series):
        _, series, _ = small_series
        std = fit_standardizer(series, [2021, 2022])
        rows = std.transform_features(series.features[:2]).reshape(-1, len(FEATURE_NAMES))
        np.testing.assert_allclose(rows.mean(axis=0), 0.0, atol=1e-6)
        np.testing.assert_allclose(rows.std(axis=0), 1.0, atol=1e-6)

    def test_stats_use_training_years_only(self, small_series):
        _, series, _ = small_series
        std_all = fit_standardizer(series, series.years)
        std_train = fit_standardizer(series, [2021, 2022])
        assert not np.allclose(std_all.feature_means, std_train.feature_means)

    def test_empty_training_set(self, small_series):
        _, series, _ = small_series
        with pytest.raises(DataError):
            fit_standardizer(series, [])

    def test_apply_to_sample(self, small_series):
        _, series, _ = small_series
        std = fit_standardizer(series, [2021, 2022])
        sample = build_windows(series, 2)[0]
        out = apply_standardizer(std, sample)
        np.testing.assert_allclose(
            out.inputs, std.transform_features(sample.inputs), atol=1e-12
        )
        assert out.target_year == sample.target_year

    def test_dimension_mismatch(self, small_series):
        _, series, _ = small_series
        std = fit_standardizer(series, [2021, 2022])
        with pytest.raises(DataError, match="feature dim"):
            std.transform_features(np.zeros((3, 4)))


def test_drop_features(small_series):
    _, series, _ = small_series
    reduced = drop_features(series, ["iri", "crack_area_pct"])
    assert "iri" not in reduced.feature_names
    assert reduced.features.shape[-1] == len(FEATURE_NAMES) - 2
    with pytest.raises(DataError, match="unknown feature"):
        drop_features(series, ["bogus"])


def test_read_observation_file_non_numeric(tmp_path):
    p = tmp_path / "obs.csv"
    header = "segment_id,year," + ",".join(FEATURE_NAMES) + ",pci"
    row = "a,2021," + ",".join(["1.0"] * len(FEATURE_NAMES)) + ",oops"
    p.write_text(header + "\n" + row + "\n")
    with pytest.raises(DataError, match="non-numeric"):
        read_observation_file(p)
