"""Feature cache and class-stats file formats."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from featreplay.store import (
    ClassStats,
    FeatureSet,
    read_class_stats,
    read_feature_cache,
    write_class_stats,
    write_feature_cache,
)


def make_set(n=10, d=4, num_classes=3, seed=0):
    rng = np.random.default_rng(seed)
    return FeatureSet(
        features=rng.standard_normal((n, d)),
        labels=rng.integers(0, num_classes, n),
        phase=1,
    )


class TestFeatureSet:
    def test_basic_accessors(self):
        fs = make_set()
        assert len(fs) == 10
        assert fs.dim == 4
        for c in fs.class_ids():
            sub = fs.for_class(c)
            assert sub.shape[0] == int((fs.labels == c).sum())

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            FeatureSet(np.zeros(3), np.zeros(3, dtype=np.int64))
        with pytest.raises(ValueError):
            FeatureSet(np.zeros((3, 2)), np.zeros(4, dtype=np.int64))

    def test_concat(self):
        a, b = make_set(seed=1), make_set(seed=2)
        both = FeatureSet.concat([a, b])
        assert len(both) == 20
        assert np.array_equal(both.features[:10], a.features)
        assert np.array_equal(both.labels[10:], b.labels)


class TestFeatureCache:
    def test_round_trip(self, tmp_path):
        fs = make_set(n=17, d=6)
        path = tmp_path / "cache.bin"
        write_feature_cache(path, fs)
        back = read_feature_cache(path)
        # storage is float32; compare at that precision
        assert np.array_equal(back.features, fs.features.astype(np.float32).astype(np.float64))
        assert np.array_equal(back.labels, fs.labels)

    def test_magic_check(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(OSError, match="magic"):
            read_feature_cache(path)

    @given(
        st.integers(min_value=1, max_value=40),
        st.integers(min_value=1, max_value=16),
        st.integers(min_value=0, max_value=2**31 - 1),
    )
    @settings(max_examples=20, deadline=None)
    def test_round_trip_property(self, tmp_path_factory, n, d, seed):
        rng = np.random.default_rng(seed)
        fs = FeatureSet(
            rng.standard_normal((n, d)).astype(np.float32),
            rng.integers(0, 5, n),
        )
        path = tmp_path_factory.mktemp("cache") / "f.bin"
        write_feature_cache(path, fs)
        back = read_feature_cache(path)
        assert np.array_equal(back.features.astype(np.float32), fs.features)
        assert np.array_equal(back.labels, fs.labels)


class TestClassStatsFile:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        stats = [
            ClassStats(
                class_id=c,
                mean=rng.standard_normal(8),
                std=np.abs(rng.standard_normal(8)) + 0.1,
                count=50 + c,
            )
            for c in (2, 5, 9)
        ]
        path = tmp_path / "stats.bin"
        write_class_stats(path, stats)
        back = read_class_stats(path)
        assert sorted(back) == [2, 5, 9]
        for s in stats:
            loaded = back[s.class_id]
            assert loaded.count == s.count
            assert np.allclose(loaded.mean, s.mean, atol=1e-6)  # float32 storage
            assert np.allclose(loaded.std, s.std, atol=1e-6)

    def test_stats_validation(self):
        with pytest.raises(ValueError):
            ClassStats(class_id=0, mean=np.zeros(3), std=np.ones(4), count=5)
        with pytest.raises(ValueError):
            ClassStats(class_id=0, mean=np.zeros((3, 1)), std=np.ones((3, 1)), count=5)

    def test_magic_check(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"XXXX" + b"\x00" * 16)
        with pytest.raises(OSError, match="magic"):
            read_class_stats(path)
