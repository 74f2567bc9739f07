import numpy as np
import pytest

from fixed_dg.datagen import (
    CsvSchema,
    WindowSpec,
    default_har_protos,
    default_har_transforms,
    gen_gaussian_domains,
    gen_rotated_moons,
    gen_synthetic_har,
    load_csv,
    loo_splits,
    save_csv,
    sliding_window,
    split_train_val,
    window_dataset,
)
from fixed_dg.errors import DataError


class TestRotatedMoons:
    def test_equal_rotations_give_equal_distributions(self):
        # distinct draws per domain, so compare distributions, not bits
        ds = gen_rotated_moons(4000, (15.0, 15.0), noise=0.05, seed=3)
        a, b = ds.domains[0].x, ds.domains[1].x
        se = np.sqrt(a.var(axis=0) / len(a) + b.var(axis=0) / len(b))
        assert np.all(np.abs(a.mean(axis=0) - b.mean(axis=0)) < 3 * se)
        assert not np.array_equal(a, b)

    def test_label_balance_invariant_under_rotation(self):
        ds = gen_rotated_moons(100, (0.0, 180.0), noise=0.1, seed=0)
        for d in ds.domains:
            assert int((d.y == 0).sum()) == 50
            assert int((d.y == 1).sum()) == 50

    def test_coordinates_bounded(self):
        noise = 0.2
        ds = gen_rotated_moons(500, (0.0, 45.0, 200.0), noise=noise, seed=1)
        for d in ds.domains:
            assert np.isfinite(d.x).all()
            assert np.abs(d.x).max() <= 2.0 + 5.0 * noise

    def test_too_few_samples_rejected(self):
        with pytest.raises(DataError):
            gen_rotated_moons(1, (0.0, 90.0), 0.1, seed=0)

    def test_deterministic_per_seed(self):
        a = gen_rotated_moons(30, (0.0, 60.0), 0.1, seed=12)
        b = gen_rotated_moons(30, (0.0, 60.0), 0.1, seed=12)
        for d1, d2 in zip(a.domains, b.domains):
            assert np.array_equal(d1.x, d2.x) and np.array_equal(d1.y, d2.y)


class TestGaussianDomains:
    MEANS = [[[0.0, 0.0], [4.0, 0.0]], [[0.5, 0.5], [4.5, 0.5]]]

    def test_zero_sigma_hits_means_exactly(self):
        ds = gen_gaussian_domains(self.MEANS, sigma=0.0, n_per_class=5, seed=0)
        d = ds.domains[1]
        assert np.array_equal(d.x[d.y == 1], np.tile([4.5, 0.5], (5, 1)))

    def test_empirical_means_close(self):
        n = 400
        ds = gen_gaussian_domains(self.MEANS, sigma=0.5, n_per_class=n, seed=2)
        d = ds.domains[0]
        got = d.x[d.y == 0].mean(axis=0)
        assert np.all(np.abs(got - [0.0, 0.0]) < 3 * 0.5 / np.sqrt(n))

    def test_sample_counts(self):
        ds = gen_gaussian_domains(self.MEANS, sigma=1.0, n_per_class=7, seed=0)
        for d in ds.domains:
            assert d.x.shape[0] == 7 * 2

    def test_inconsistent_class_count_rejected(self):
        with pytest.raises(DataError):
            gen_gaussian_domains([[[0.0, 0.0]], [[1.0, 1.0], [2.0, 2.0]]], 1.0, 3, seed=0)


class TestSyntheticHar:
    def test_same_class_identical_up_to_phase(self):
        protos = [(3.0, 1.0, "sine"), (5.0, 2.0, "sine")]
        transforms = [(1.0, 0.0, 0.0), (1.0, 0.0, 0.0)]  # identity, no noise
        ds = gen_synthetic_har(protos, transforms, n_per_class=2, length=64, channels=2, seed=4)
        d = ds.domains[0]
        a, b = d.x[0], d.x[1]  # same class, different phase
        # sliding one over phase shifts must reproduce the other at some lag
        best = min(np.abs(np.roll(a, k, axis=1) - b).max() for k in range(64))
        assert best < 0.15  # discrete phase grid; equality up to sampling of the phase

    def test_sine_rms_before_gain(self):
        # amplitude 2 sine has RMS 2/sqrt(2)
        protos = [(3.0, 2.0, "sine"), (5.0, 2.0, "sine")]
        transforms = [(1.0, 0.0, 0.0), (1.0, 0.0, 0.0)]
        ds = gen_synthetic_har(protos, transforms, n_per_class=8, length=128, channels=3, seed=5)
        d = ds.domains[0]
        rms = np.sqrt((d.x[d.y == 0] ** 2).mean(axis=2))
        assert np.all(np.abs(rms - 2.0 / np.sqrt(2.0)) < 0.05 * 2.0 / np.sqrt(2.0))

    def test_shapes(self):
        ds = gen_synthetic_har(
            default_har_protos(4), default_har_transforms(3, 0.1, 6), n_per_class=5, length=32, channels=6, seed=0
        )
        for d in ds.domains:
            assert d.x.shape == (20, 6, 32)

    def test_deterministic_per_seed(self):
        args = (default_har_protos(2), default_har_transforms(2, 0.1, 2), 3, 16, 2)
        a = gen_synthetic_har(*args, seed=9)
        b = gen_synthetic_har(*args, seed=9)
        for d1, d2 in zip(a.domains, b.domains):
            assert np.array_equal(d1.x, d2.x)


class TestSlidingWindow:
    def test_window_count_and_starts(self):
        series = np.arange(20.0).reshape(2, 10)
        out = sliding_window(series, WindowSpec(width=4, stride=2))
        assert out.shape == (4, 2, 4)
        for i, start in enumerate((0, 2, 4, 6)):
            assert np.array_equal(out[i], series[:, start : start + 4])

    def test_non_overlapping_tiling(self):
        series = np.arange(12.0).reshape(1, 12)
        out = sliding_window(series, WindowSpec(width=3, stride=3))
        assert np.array_equal(out.reshape(1, -1), series[:, :12].reshape(1, -1))

    def test_full_width_single_window(self):
        series = np.arange(8.0).reshape(2, 4)
        out = sliding_window(series, WindowSpec(width=4, stride=1))
        assert out.shape == (1, 2, 4)
        assert np.array_equal(out[0], series)

    def test_too_short_series_rejected(self):
        with pytest.raises(DataError):
            sliding_window(np.zeros((1, 3)), WindowSpec(width=4, stride=1))


class TestSplit:
    def _dataset(self):
        return gen_rotated_moons(100, (0.0, 30.0), noise=0.1, seed=8)

    def test_80_20_split(self):
        tr, va = split_train_val(self._dataset(), ratio=0.8, seed=1)
        for d_tr, d_va in zip(tr.domains, va.domains):
            assert d_tr.x.shape[0] == 80
            assert d_va.x.shape[0] == 20

    def test_partition(self):
        ds = self._dataset()
        tr, va = split_train_val(ds, ratio=0.8, seed=2)
        for d, d_tr, d_va in zip(ds.domains, tr.domains, va.domains):
            merged = np.concatenate([d_tr.x, d_va.x])
            assert merged.shape == d.x.shape
            # same multiset of rows
            assert np.array_equal(
                np.sort(merged.view([("", merged.dtype)] * 2), axis=0),
                np.sort(d.x.view([("", d.x.dtype)] * 2), axis=0),
            )

    def test_same_seed_same_split(self):
        ds = self._dataset()
        a = split_train_val(ds, seed=3)[0]
        b = split_train_val(ds, seed=3)[0]
        for d1, d2 in zip(a.domains, b.domains):
            assert np.array_equal(d1.x, d2.x)

    def test_stratified(self):
        tr, _ = split_train_val(self._dataset(), ratio=0.8, seed=4)
        for d in tr.domains:
            assert int((d.y == 0).sum()) == 40

    def test_tiny_domain_rejected(self):
        ds = gen_rotated_moons(4, (0.0, 10.0), 0.1, seed=0)
        with pytest.raises(DataError):
            split_train_val(ds, seed=0)


class TestLeaveOneOut:
    def test_yields_m_configurations(self):
        ds = gen_rotated_moons(20, (0.0, 30.0, 60.0, 90.0), 0.1, seed=0)
        splits = list(loo_splits(ds))
        assert len(splits) == 4
        for name, sources, target in splits:
            assert sources.num_domains == 3
            assert target.num_domains == 1
            assert target.domains[0].name == name
            assert name not in sources.domain_names()


class TestCsv:
    def test_flat_roundtrip(self, tmp_path, rng):
        ds = gen_rotated_moons(24, (0.0, 45.0), 0.1, seed=6)
        path = tmp_path / "moons.csv"
        save_csv(ds, path, CsvSchema(kind="flat"))
        loaded = load_csv(path, CsvSchema(kind="flat"))
        assert loaded.num_classes == ds.num_classes
        for d1, d2 in zip(ds.domains, loaded.domains):
            assert np.array_equal(d1.x, d2.x)
            assert np.array_equal(d1.y, d2.y)

    def test_long_roundtrip(self, tmp_path):
        ds = gen_synthetic_har(
            default_har_protos(2), default_har_transforms(2, 0.05, 2), n_per_class=3, length=8, channels=2, seed=7
        )
        path = tmp_path / "har.csv"
        save_csv(ds, path, CsvSchema(kind="long"))
        loaded = load_csv(path, CsvSchema(kind="long"))
        for d1, d2 in zip(ds.domains, loaded.domains):
            assert np.array_equal(d1.x, d2.x)
            assert np.array_equal(d1.y, d2.y)

    def test_three_rows_two_domains(self, tmp_path):
        path = tmp_path / "tiny.csv"
        path.write_text("domain,label,f0\n0,1,0.5\n0,2,0.25\n1,1,-2.0\n")
        ds = load_csv(path)
        assert [d.x.shape[0] for d in ds.domains] == [2, 1]
        assert ds.num_classes == 2  # labels remapped to dense 0..K

    def test_nan_feature_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("domain,label,f0\n0,0,1.0\n0,1,nan\n")
        with pytest.raises(DataError, match="line 3"):
            load_csv(path)

    def test_ragged_row_names_line(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("domain,label,f0,f1\n0,0,1.0,2.0\n0,1,3.0\n")
        with pytest.raises(DataError, match="line 3"):
            load_csv(path)

    def test_non_numeric_names_line(self, tmp_path):
        path = tmp_path / "alpha.csv"
        path.write_text("domain,label,f0\n0,0,abc\n")
        with pytest.raises(DataError, match="line 2"):
            load_csv(path)

    def test_unknown_long_column_rejected(self, tmp_path):
        path = tmp_path / "cols.csv"
        path.write_text("domain,label,c,t,value,extra\n")
        with pytest.raises(DataError, match="extra"):
            load_csv(path, CsvSchema(kind="long"))

    def test_windowing_after_long_load(self, tmp_path):
        ds = gen_synthetic_har(
            default_har_protos(2), default_har_transforms(2, 0.0, 2), n_per_class=2, length=32, channels=2, seed=1
        )
        windowed = window_dataset(ds, WindowSpec(width=16, stride=8))
        assert windowed.feature_shape == (2, 16)
        assert windowed.domains[0].x.shape[0] == ds.domains[0].x.shape[0] * 3
