"""Accuracy matrix and incremental-learning metrics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from featreplay.metrics import (
    AccuracyMatrix,
    average_forgetting,
    average_incremental_accuracy,
    forgetting_of_task,
    phase_forgetting,
    render_report,
)


def toy_matrix() -> AccuracyMatrix:
    """Fixed 4-phase matrix with a negative-forgetting corner at (t=3, j=1)."""
    m = AccuracyMatrix(4)
    entries = {
        (0, 0): 80.0,
        (1, 0): 70.0, (1, 1): 90.0,
        (2, 0): 75.0, (2, 1): 85.0, (2, 2): 60.0,
        (3, 0): 65.0, (3, 1): 95.0, (3, 2): 55.0, (3, 3): 88.0,
    }
    for (t, j), v in entries.items():
        m.set_task(t, j, v)
    for t, v in enumerate([80.0, 78.0, 74.0, 72.5]):
        m.set_seen(t, v)
    return m


class TestAccuracyMatrix:
    def test_triangular_occupancy(self):
        m = AccuracyMatrix(3)
        with pytest.raises(ValueError):
            m.set_task(0, 1, 50.0)  # j > t
        with pytest.raises(ValueError):
            m.set_task(3, 0, 50.0)  # phase out of range

    def test_range_validation(self):
        m = AccuracyMatrix(2)
        with pytest.raises(ValueError):
            m.set_task(0, 0, 101.0)
        with pytest.raises(ValueError):
            m.set_seen(0, -1.0)

    def test_missing_entry(self):
        m = AccuracyMatrix(2)
        with pytest.raises(ValueError):
            m.task(0, 0)
        with pytest.raises(ValueError):
            m.seen(1)

    def test_json_round_trip(self, tmp_path):
        m = toy_matrix()
        path = tmp_path / "metrics.json"
        m.to_json(path)
        back = AccuracyMatrix.from_json(path)
        assert back.task_acc == m.task_acc
        assert back.seen_acc == m.seen_acc
        assert back.num_phases == m.num_phases


class TestAverageIncrementalAccuracy:
    def test_simple_mean(self):
        assert average_incremental_accuracy([80.0, 70.0, 60.0]) == 70.0

    def test_single_phase(self):
        assert average_incremental_accuracy([55.5]) == 55.5

    def test_toy_exact(self):
        # exact 64-bit arithmetic, same left-to-right sum
        expected = (80.0 + 78.0 + 74.0 + 72.5) / 4.0
        m = toy_matrix()
        got = average_incremental_accuracy([m.seen(t) for t in range(4)])
        assert got == expected == 76.125

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            average_incremental_accuracy([])


class TestForgetting:
    def test_two_point(self):
        m = AccuracyMatrix(2)
        m.set_task(0, 0, 80.0)
        m.set_task(1, 0, 70.0)
        m.set_task(1, 1, 90.0)
        assert forgetting_of_task(m, 0, 1) == 10.0
        assert phase_forgetting(m, 1) == 10.0
        assert average_forgetting(m, 1) == 10.0

    def test_peak_rule(self):
        m = AccuracyMatrix(3)
        for (t, j), v in {(0, 0): 80.0, (1, 0): 85.0, (2, 0): 75.0}.items():
            m.set_task(t, j, v)
        m.set_task(1, 1, 50.0)
        m.set_task(2, 1, 50.0)
        m.set_task(2, 2, 50.0)
        # max(80, 85) - 75
        assert forgetting_of_task(m, 0, 2) == 10.0

    def test_negative_forgetting_allowed(self):
        m = toy_matrix()
        assert forgetting_of_task(m, 1, 3) == -5.0

    def test_requires_j_before_t(self):
        m = toy_matrix()
        with pytest.raises(ValueError):
            forgetting_of_task(m, 2, 2)
        with pytest.raises(ValueError):
            average_forgetting(m, 0)

    def test_toy_exact(self):
        m = toy_matrix()
        f1 = 10.0
        f2 = (5.0 + 5.0) / 2
        f3 = (15.0 + -5.0 + 5.0) / 3
        assert phase_forgetting(m, 1) == f1
        assert phase_forgetting(m, 2) == f2
        assert phase_forgetting(m, 3) == f3
        assert average_forgetting(m, 3) == (f1 + f2 + f3) / 3

    def test_constant_matrix_zero(self):
        m = AccuracyMatrix(3)
        for t in range(3):
            for j in range(t + 1):
                m.set_task(t, j, 64.0)
            m.set_seen(t, 64.0)
        assert average_forgetting(m, 2) == 0.0


class TestProperties:
    @given(st.lists(st.floats(min_value=0, max_value=100), min_size=1, max_size=20))
    @settings(max_examples=50)
    def test_mean_bounds(self, accs):
        got = average_incremental_accuracy(accs)
        assert min(accs) - 1e-9 <= got <= max(accs) + 1e-9

    @given(st.integers(min_value=2, max_value=6), st.integers(min_value=0, max_value=2**31 - 1))
    @settings(max_examples=30)
    def test_metrics_deterministic_and_permutation_safe(self, phases, seed):
        rng = np.random.default_rng(seed)
        m = AccuracyMatrix(phases)
        values = {}
        for t in range(phases):
            for j in range(t + 1):
                values[(t, j)] = float(rng.uniform(0, 100))
            m.set_seen(t, float(rng.uniform(0, 100)))
        # filling in shuffled order must not change anything
        items = list(values.items())
        rng.shuffle(items)
        for (t, j), v in items:
            m.set_task(t, j, v)
        first = average_forgetting(m, phases - 1)
        again = average_forgetting(m, phases - 1)
        assert first == again  # bit-identical on repeat


class TestReport:
    def test_report_contains_summary(self):
        text = render_report(toy_matrix())
        assert "A_T=76.1250" in text
        assert "F_T=" in text
        lines = text.strip().splitlines()
        assert len(lines) == 1 + 4 + 1  # header, 4 phases, summary
