"""Task stream: orderings, phase splits, manifests, augmentation, iteration."""

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from featreplay.datasets import make_shapes_dataset
from featreplay.tasks import (
    AugmentationPolicy,
    ClassOrdering,
    PhaseManifest,
    TaskStream,
    augment_batch,
    build_phase_splits,
    read_manifests,
    write_manifests,
)


class TestClassOrdering:
    def test_deterministic(self):
        a = ClassOrdering.from_seed(100, 1993)
        b = ClassOrdering.from_seed(100, 1993)
        assert a.permutation == b.permutation

    def test_seed_changes_order(self):
        a = ClassOrdering.from_seed(100, 0)
        b = ClassOrdering.from_seed(100, 1)
        assert a.permutation != b.permutation

    def test_remap_inverts_permutation(self):
        ordering = ClassOrdering.from_seed(20, 7)
        remap = ordering.remap_array()
        for new_id, original in enumerate(ordering.permutation):
            assert remap[original] == new_id

    def test_rejects_non_bijection(self):
        with pytest.raises(ValueError, match="bijection"):
            ClassOrdering(seed=0, permutation=(0, 0, 1))


class TestPhaseSplits:
    def test_ten_phase_oracle(self):
        # 100 classes, 50 initial, 10 increments -> [50, 5, 5, ..., 5]
        splits = build_phase_splits(100, 50, 10, seed=1993)
        assert [len(m.class_ids) for m in splits] == [50] + [5] * 10
        assert splits[0].class_ids == tuple(range(50))
        assert splits[1].class_ids == tuple(range(50, 55))
        assert splits[10].class_ids == tuple(range(95, 100))

    def test_five_phase_oracle(self):
        splits = build_phase_splits(100, 50, 5, seed=1993)
        assert [len(m.class_ids) for m in splits] == [50] + [10] * 5

    def test_twenty_phase_oracle(self):
        splits = build_phase_splits(100, 40, 20, seed=1993)
        assert [len(m.class_ids) for m in splits] == [40] + [3] * 20

    def test_indivisible_error_names_counts(self):
        with pytest.raises(ValueError, match="50 remaining classes.*T=7"):
            build_phase_splits(100, 50, 7, seed=0)

    def test_initial_count_bounds(self):
        with pytest.raises(ValueError, match="initial_count=100"):
            build_phase_splits(100, 100, 5, seed=0)
        with pytest.raises(ValueError, match="initial_count=0"):
            build_phase_splits(100, 0, 5, seed=0)

    def test_requires_an_increment(self):
        with pytest.raises(ValueError, match="T=0"):
            build_phase_splits(100, 50, 0, seed=0)

    @given(
        st.integers(min_value=1, max_value=20),
        st.integers(min_value=1, max_value=10),
        st.integers(min_value=1, max_value=8),
        st.integers(min_value=0, max_value=10_000),
    )
    @settings(max_examples=60, deadline=None)
    def test_disjoint_and_covering(self, initial, phases, per_phase, seed):
        num_classes = initial + phases * per_phase
        splits = build_phase_splits(num_classes, initial, phases, seed)
        assert len(splits) == phases + 1
        all_ids = [c for m in splits for c in m.class_ids]
        assert len(all_ids) == len(set(all_ids))  # mutually disjoint
        assert sorted(all_ids) == list(range(num_classes))  # covering


class TestManifests:
    def test_round_trip(self, tmp_path):
        manifests = [
            PhaseManifest(0, (0, 1, 2), sample_count=30, split="train"),
            PhaseManifest(1, (3,), sample_count=10, split="train"),
        ]
        path = tmp_path / "manifests.txt"
        write_manifests(path, manifests)
        assert read_manifests(path) == manifests

    def test_validation(self):
        with pytest.raises(ValueError, match="split"):
            PhaseManifest(0, (0,), split="val")
        with pytest.raises(ValueError, match="duplicate"):
            PhaseManifest(0, (1, 1))


class TestAugmentBatch:
    def _batch(self, n=4, size=8, seed=0):
        gen = torch.Generator().manual_seed(seed)
        return torch.rand(n, 3, size, size, generator=gen)

    def test_test_time_is_normalization_only(self):
        x = self._batch()
        policy = AugmentationPolicy(normalize_mean=(0.5, 0.4, 0.3), normalize_std=(0.2, 0.2, 0.2))
        out = augment_batch(x, policy, None)
        mean = torch.tensor(policy.normalize_mean).view(1, 3, 1, 1)
        std = torch.tensor(policy.normalize_std).view(1, 3, 1, 1)
        assert torch.equal(out, (x - mean) / std)

    def test_flip_produces_original_or_mirror(self):
        x = self._batch(n=16)
        policy = AugmentationPolicy(
            horizontal_flip=True,
            random_crop=False,
            normalize_mean=(0.0, 0.0, 0.0),
            normalize_std=(1.0, 1.0, 1.0),
        )
        out = augment_batch(x, policy, torch.Generator().manual_seed(1))
        for i in range(16):
            assert torch.equal(out[i], x[i]) or torch.equal(out[i], x[i].flip(-1))

    def test_crop_preserves_shape(self):
        x = self._batch(n=6, size=12)
        policy = AugmentationPolicy(horizontal_flip=False, random_crop=True, crop_padding=3)
        out = augment_batch(x, policy, torch.Generator().manual_seed(0))
        assert out.shape == x.shape

    def test_enhanced_runs_and_cuts_a_square(self):
        x = torch.ones(2, 3, 16, 16)
        policy = AugmentationPolicy(
            horizontal_flip=False,
            random_crop=False,
            enhanced=True,
            cutout_size=4,
            normalize_mean=(0.0, 0.0, 0.0),
            normalize_std=(1.0, 1.0, 1.0),
        )
        out = augment_batch(x, policy, torch.Generator().manual_seed(2))
        assert out.shape == x.shape
        # each image has exactly one 4x4 zeroed square
        for i in range(2):
            assert int((out[i] == 0).all(dim=0).sum()) == 16

    def test_deterministic_given_generator(self):
        x = self._batch(n=8)
        policy = AugmentationPolicy()
        a = augment_batch(x, policy, torch.Generator().manual_seed(5))
        b = augment_batch(x, policy, torch.Generator().manual_seed(5))
        assert torch.equal(a, b)


@pytest.fixture(scope="module")
def small_stream():
    dataset = make_shapes_dataset(per_class_train=8, per_class_test=4, seed=11)
    return TaskStream(dataset, initial_count=4, num_incremental=3, seed=11)


class TestTaskStream:
    def test_phase_structure(self, small_stream):
        assert small_stream.num_phases == 4
        assert small_stream.class_ids(0) == (0, 1, 2, 3)
        assert small_stream.class_ids(2) == (6, 7)
        assert small_stream.seen_class_ids(1) == (0, 1, 2, 3, 4, 5)

    def test_phase_arrays_only_contain_phase_classes(self, small_stream):
        for split in ("train", "test"):
            for t in range(small_stream.num_phases):
                _, labels = small_stream.phase_arrays(t, split)
                assert set(labels.tolist()) == set(small_stream.class_ids(t))

    def test_manifest_counts(self, small_stream):
        train = small_stream.manifests("train")
        assert [m.sample_count for m in train] == [32, 16, 16, 16]
        test = small_stream.manifests("test")
        assert [m.sample_count for m in test] == [16, 8, 8, 8]

    def test_epoch_covers_phase_once(self, small_stream):
        policy = AugmentationPolicy.for_dataset("shapes")
        seen = []
        for batch, labels in small_stream.iterate_phase(1, policy, batch_size=5, seed=3):
            assert batch.shape[0] == labels.shape[0]
            seen.extend(labels.tolist())
        _, expected = small_stream.phase_arrays(1, "train")
        assert sorted(seen) == sorted(expected.tolist())

    def test_train_iteration_deterministic(self, small_stream):
        policy = AugmentationPolicy.for_dataset("shapes")

        def collect(seed):
            return [
                (batch.clone(), labels.clone())
                for batch, labels in small_stream.iterate_phase(0, policy, 7, seed=seed)
            ]

        a, b = collect(9), collect(9)
        for (xa, ya), (xb, yb) in zip(a, b):
            assert torch.equal(xa, xb) and torch.equal(ya, yb)
        c = collect(10)
        assert any(not torch.equal(xa, xc) for (xa, _), (xc, _) in zip(a, c))

    def test_test_split_is_plain_normalization(self, small_stream):
        policy = AugmentationPolicy.for_dataset("shapes")
        images, labels = small_stream.phase_arrays(0, "test")
        batches = list(small_stream.iterate_phase(0, policy, 100, split="test"))
        assert len(batches) == 1
        expected = augment_batch(images, policy.test_time(), None)
        assert torch.equal(batches[0][0], expected)
        assert np.array_equal(batches[0][1].numpy(), labels)

    def test_bad_batch_size(self, small_stream):
        policy = AugmentationPolicy.for_dataset("shapes")
        with pytest.raises(ValueError, match="batch_size"):
            list(small_stream.iterate_phase(0, policy, 0))


class TestShapesDataset:
    def test_shapes_and_ranges(self):
        ds = make_shapes_dataset(per_class_train=3, per_class_test=2, seed=0)
        assert ds.train_images.shape == (30, 3, 32, 32)
        assert ds.test_images.shape == (20, 3, 32, 32)
        assert ds.train_images.dtype == np.float32
        assert float(ds.train_images.min()) >= 0.0
        assert float(ds.train_images.max()) <= 1.0
        assert np.array_equal(np.bincount(ds.train_labels), np.full(10, 3))

    def test_deterministic_by_seed(self):
        a = make_shapes_dataset(per_class_train=2, per_class_test=1, seed=4)
        b = make_shapes_dataset(per_class_train=2, per_class_test=1, seed=4)
        assert np.array_equal(a.train_images, b.train_images)
        c = make_shapes_dataset(per_class_train=2, per_class_test=1, seed=5)
        assert not np.array_equal(a.train_images, c.train_images)

    def test_train_test_differ(self):
        ds = make_shapes_dataset(per_class_train=2, per_class_test=2, seed=0)
        assert not np.array_equal(ds.train_images[:20], ds.test_images)

    def test_class_limit(self):
        with pytest.raises(ValueError, match="at most 10"):
            make_shapes_dataset(num_classes=11)
