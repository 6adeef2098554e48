"""Incremental classifier: extension, replay training, masked baseline, prediction."""

import numpy as np
import pytest

from featreplay.classifier import (
    ClassifierState,
    ClassifierTrainConfig,
    ReplayPlan,
    accuracy,
    extend_classifier,
    predict,
    train_phase,
    train_phase_masked_baseline,
)
from featreplay.store import FeatureSet


def make_blobs(class_ids, per_class, dim=16, seed=0, spread=0.3, center_scale=4.0):
    """Gaussian blobs, centers keyed by class id (stable across calls and subsets)."""
    rng = np.random.default_rng(seed)
    feats, labels = [], []
    for c in sorted(class_ids):
        center = np.random.default_rng(1000 + c).normal(0.0, center_scale, dim)
        feats.append(center + spread * rng.standard_normal((per_class, dim)))
        labels.append(np.full(per_class, c, dtype=np.int64))
    return FeatureSet(np.concatenate(feats), np.concatenate(labels))


class TestExtend:
    def test_old_rows_bitwise_preserved(self):
        state = ClassifierState.empty(8)
        state = extend_classifier(state, (0, 1), seed=1)
        before_w, before_b = state.weight.copy(), state.bias.copy()
        extended = extend_classifier(state, (2, 3, 4), seed=2)
        assert extended.class_ids == (0, 1, 2, 3, 4)
        assert np.array_equal(extended.weight[:2], before_w)
        assert np.array_equal(extended.bias[:2], before_b)

    def test_new_rows_small_gaussian_zero_bias(self):
        state = extend_classifier(ClassifierState.empty(64), range(50), seed=0)
        assert state.weight.shape == (50, 64)
        assert abs(float(state.weight.std()) - 0.01) < 0.003
        assert np.array_equal(state.bias, np.zeros(50, dtype=np.float32))

    def test_duplicate_registration_rejected(self):
        state = extend_classifier(ClassifierState.empty(4), (0, 1), seed=0)
        with pytest.raises(ValueError, match="already registered"):
            extend_classifier(state, (1, 2), seed=0)
        with pytest.raises(ValueError, match="duplicate"):
            extend_classifier(state, (5, 5), seed=0)

    def test_empty_extension_is_identity(self):
        state = extend_classifier(ClassifierState.empty(4), (0,), seed=0)
        assert extend_classifier(state, (), seed=3) is state

    def test_deterministic_by_seed(self):
        a = extend_classifier(ClassifierState.empty(6), (0, 1), seed=9)
        b = extend_classifier(ClassifierState.empty(6), (0, 1), seed=9)
        assert np.array_equal(a.weight, b.weight)


class TestState:
    def test_validation(self):
        with pytest.raises(ValueError, match="row count"):
            ClassifierState(np.zeros((2, 4), np.float32), np.zeros(2, np.float32), (0,), 0)
        with pytest.raises(ValueError, match="duplicate"):
            ClassifierState(np.zeros((2, 4), np.float32), np.zeros(2, np.float32), (1, 1), 0)

    def test_save_load_round_trip(self, tmp_path):
        state = extend_classifier(ClassifierState.empty(5), (3, 0, 7), seed=4)
        path = tmp_path / "classifier.npz"
        state.save(path)
        back = ClassifierState.load(path)
        assert back.class_ids == (3, 0, 7)
        assert back.phase == state.phase
        assert np.array_equal(back.weight, state.weight)
        assert np.array_equal(back.bias, state.bias)

    def test_row_lookup(self):
        state = extend_classifier(ClassifierState.empty(4), (5, 2), seed=0)
        assert state.row_of(5) == 0
        assert state.row_of(2) == 1


class TestPredict:
    def test_ties_break_to_lowest_class_id(self):
        # all logits identical; the registry deliberately lists ids out of order
        state = ClassifierState(
            np.zeros((3, 4), np.float32), np.zeros(3, np.float32), (2, 0, 1), 0
        )
        ids, logits = predict(state, np.ones((5, 4)))
        assert np.array_equal(ids, np.zeros(5, dtype=np.int64))
        assert logits.shape == (5, 3)
        assert logits.dtype == np.float64

    def test_clear_winner(self):
        weight = np.zeros((3, 2), np.float32)
        weight[1] = (10.0, 0.0)
        state = ClassifierState(weight, np.zeros(3, np.float32), (4, 9, 6), 0)
        ids, _ = predict(state, np.asarray([[1.0, 0.0]]))
        assert ids[0] == 9

    def test_shape_validation(self):
        state = extend_classifier(ClassifierState.empty(4), (0,), seed=0)
        with pytest.raises(ValueError, match="expected"):
            predict(state, np.zeros((2, 3)))

    def test_accuracy_percent_scale(self):
        weight = np.eye(2, dtype=np.float32)
        state = ClassifierState(weight, np.zeros(2, np.float32), (0, 1), 0)
        feats = np.asarray([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.9, 0.0]])
        labels = np.asarray([0, 1, 1, 0])
        assert accuracy(state, feats, labels) == pytest.approx(75.0)


class TestReplayPlan:
    def test_covers(self):
        plan = ReplayPlan.balanced([0, 1, 2], per_class=20)
        plan.validate_covers([0, 2])
        with pytest.raises(ValueError, match="missing old classes: \\[3\\]"):
            plan.validate_covers([0, 3])
        assert plan.counts == {0: 20, 1: 20, 2: 20}


CONFIG = ClassifierTrainConfig(epochs=12, batch_size=32, learning_rate=0.1, seed=0)


class TestTrainPhase:
    def test_replay_required_and_must_cover(self):
        state = extend_classifier(ClassifierState.empty(16), (0, 1, 2, 3), seed=0)
        new_only = make_blobs([2, 3], per_class=10)
        with pytest.raises(ValueError, match="replay required"):
            train_phase(state, new_only, None, CONFIG, phase=1)
        partial = make_blobs([0], per_class=10)
        with pytest.raises(ValueError, match="does not cover.*\\[1\\]"):
            train_phase(state, new_only, partial, CONFIG, phase=1)

    def test_unregistered_label_rejected(self):
        state = extend_classifier(ClassifierState.empty(16), (0, 1), seed=0)
        with pytest.raises(ValueError, match="not registered"):
            train_phase(state, make_blobs([0, 1, 5], per_class=4), None, CONFIG, phase=0)

    def test_perfect_replay_matches_joint_training(self):
        train = make_blobs(range(4), per_class=40, seed=1)
        test = make_blobs(range(4), per_class=40, seed=2)

        # joint: all four classes at once
        joint = extend_classifier(ClassifierState.empty(16), range(4), seed=0)
        joint, _ = train_phase(joint, train, None, CONFIG, phase=0)
        joint_acc = accuracy(joint, test.features, test.labels)

        # incremental with perfect replay: the replay set IS the old real data
        def subset(fs, wanted):
            mask = np.isin(fs.labels, list(wanted))
            return FeatureSet(fs.features[mask], fs.labels[mask])

        state = extend_classifier(ClassifierState.empty(16), (0, 1), seed=0)
        state, _ = train_phase(state, subset(train, {0, 1}), None, CONFIG, phase=0)
        state = extend_classifier(state, (2, 3), seed=1)
        state, _ = train_phase(
            state, subset(train, {2, 3}), subset(train, {0, 1}), CONFIG, phase=1
        )
        incremental_acc = accuracy(state, test.features, test.labels)
        assert abs(joint_acc - incremental_acc) <= 1.0
        assert joint_acc > 95.0

    def test_phase_recorded(self):
        state = extend_classifier(ClassifierState.empty(16), (0, 1), seed=0)
        state, losses = train_phase(state, make_blobs([0, 1], 10), None, CONFIG, phase=7)
        assert state.phase == 7
        assert len(losses) == CONFIG.epochs


class TestMaskedBaseline:
    def test_old_rows_untouched_bitwise(self):
        state = extend_classifier(ClassifierState.empty(16), (0, 1), seed=0)
        state, _ = train_phase(state, make_blobs([0, 1], 20), None, CONFIG, phase=0)
        old_w, old_b = state.weight.copy(), state.bias.copy()
        state = extend_classifier(state, (2, 3), seed=1)
        trained, _ = train_phase_masked_baseline(state, make_blobs([2, 3], 20), CONFIG, phase=1)
        assert np.array_equal(trained.weight[:2], old_w)
        assert np.array_equal(trained.bias[:2], old_b)

    def test_equals_training_the_subproblem(self):
        # Restricting the softmax to the new classes must reproduce a fresh
        # classifier trained on just those classes (same seed, same data).
        new = make_blobs([2, 3], per_class=25, seed=5)
        full = extend_classifier(ClassifierState.empty(16), (0, 1), seed=0)
        full = extend_classifier(full, (2, 3), seed=1)
        masked, _ = train_phase_masked_baseline(full, new, CONFIG, phase=1)

        sub = ClassifierState(
            weight=full.weight[2:].copy(), bias=full.bias[2:].copy(), class_ids=(2, 3), phase=0
        )
        sub, _ = train_phase(sub, new, None, CONFIG, phase=1)
        assert np.allclose(masked.weight[2:], sub.weight, atol=1e-5)
        assert np.allclose(masked.bias[2:], sub.bias, atol=1e-5)

    def test_forgets_old_classes_relative_to_replay(self):
        # overlapping blobs: without replay the old-class margin is never
        # re-calibrated against the new rows and old-class accuracy drops
        train = make_blobs(range(4), per_class=40, dim=4, seed=3, spread=0.8, center_scale=1.0)
        test = make_blobs(range(4), per_class=40, dim=4, seed=4, spread=0.8, center_scale=1.0)

        def subset(fs, wanted):
            mask = np.isin(fs.labels, list(wanted))
            return FeatureSet(fs.features[mask], fs.labels[mask])

        base = extend_classifier(ClassifierState.empty(4), (0, 1), seed=0)
        base, _ = train_phase(base, subset(train, {0, 1}), None, CONFIG, phase=0)
        base = extend_classifier(base, (2, 3), seed=1)
        masked, _ = train_phase_masked_baseline(base, subset(train, {2, 3}), CONFIG, phase=1)
        replayed, _ = train_phase(
            base, subset(train, {2, 3}), subset(train, {0, 1}), CONFIG, phase=1
        )
        old = subset(test, {0, 1})
        masked_old = accuracy(masked, old.features, old.labels)
        replay_old = accuracy(replayed, old.features, old.labels)
        assert replay_old - masked_old >= 10.0
