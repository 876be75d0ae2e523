from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emclbench.data import Dataset
from emclbench.metrics import (
    AccuracyMatrix, UndefinedMetricError, average_accuracy_curve, bwt_or_flag, compute_acc,
    compute_bwt, evaluate_accuracy,
)
from emclbench.nn import MLP


def upper(values):
    """Square matrix from a list of rows, NaN below the diagonal."""
    m = np.array(values, dtype=np.float64)
    m[np.tril_indices(len(m), -1)] = np.nan
    return AccuracyMatrix(len(m), m)


def exact_mean(xs):
    return float(sum((Fraction(x) for x in xs), Fraction(0)) / len(xs))


class Fixed:
    """Model returning preset logits."""

    def __init__(self, logits):
        self.logits = np.asarray(logits, dtype=np.float64)

    def forward(self, inputs, head_mask=None):
        out = self.logits[inputs[:, 0].astype(int)].copy()
        if head_mask is not None:
            keep = np.zeros(out.shape[1], bool)
            keep[list(head_mask)] = True
            out[:, ~keep] = -np.inf
        return out


def test_acc_examples():
    assert compute_acc(upper([[1.0, 1.0], [0, 1.0]])) == 1.0
    assert compute_acc(upper([[0.9, 0.8], [0, 0.7]])) == 0.75


def test_bwt_examples():
    assert compute_bwt(upper([[0.9, 0.9], [0, 0.4]])) == 0.0
    got = compute_bwt(upper([[0.9, 0.8], [0, 0.7]]))
    assert got == float(Fraction(0.8) - Fraction(0.9))
    assert got == pytest.approx(-0.1, abs=1e-15)


def test_three_task_hand_computation():
    m = upper([[0.75, 0.5, 0.25], [0, 1.0, 0.5], [0, 0, 0.875]])
    assert compute_acc(m) == (0.25 + 0.5 + 0.875) / 3
    assert compute_bwt(m) == ((0.25 - 0.75) + (0.5 - 1.0)) / 2 == -0.5


def test_undefined_metrics():
    m = AccuracyMatrix(2)
    with pytest.raises(UndefinedMetricError):
        compute_acc(m)
    single = AccuracyMatrix(1, [[0.6]])
    with pytest.raises(UndefinedMetricError):
        compute_bwt(single)
    assert bwt_or_flag(single) == (0.0, False)
    assert compute_acc(single) == 0.6


unit = st.floats(0, 1, allow_nan=False)


@st.composite
def matrices(draw, max_t=8):
    T = draw(st.integers(2, max_t))
    vals = draw(st.lists(unit, min_size=T * T, max_size=T * T))
    return upper(np.array(vals).reshape(T, T))


@settings(max_examples=100, deadline=None)
@given(matrices())
def test_metrics_are_exact_rational_means(m):
    T = m.num_tasks
    e = m.entries
    assert compute_acc(m) == exact_mean(e[:, -1].tolist())
    diffs = [Fraction(float(e[t, -1])) - Fraction(float(e[t, t])) for t in range(T - 1)]
    assert compute_bwt(m) == float(sum(diffs, Fraction(0)) / (T - 1))


@settings(max_examples=100, deadline=None)
@given(matrices(), st.randoms(use_true_random=False))
def test_acc_invariant_under_consistent_relabelling(m, rnd):
    # only the final column matters for ACC, so permuting rows leaves it unchanged
    perm = list(range(m.num_tasks))
    rnd.shuffle(perm)
    e = m.entries.copy()
    shuffled = e[perm]
    assert exact_mean(shuffled[:, -1].tolist()) == compute_acc(m)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 8), st.data())
def test_nonincreasing_rows_give_nonpositive_bwt(T, data):
    rows = []
    for t in range(T):
        vals = sorted(data.draw(st.lists(unit, min_size=T - t, max_size=T - t)), reverse=True)
        rows.append([0.0] * t + vals)
    assert compute_bwt(upper(rows)) <= 0


def test_record_fills_columns_and_validates():
    m = AccuracyMatrix(3)
    m.record(0, [0.5])
    m.record(1, [0.4, 0.6])
    assert m[0, 1] == 0.4 and np.isnan(m[1, 0])
    with pytest.raises(ValueError):
        m.record(2, [0.1])
    with pytest.raises(ValueError):
        m.record(2, [0.1, 0.2, 1.5])


def test_csv_round_trip_is_exact_and_marks_undefined():
    m = upper([[0.1 + 0.2, 1 / 3], [0, 0.7]])
    text = m.to_csv()
    assert text.splitlines()[0] == "task,0,1"
    assert text.splitlines()[2] == "1,,0.7"
    back = AccuracyMatrix.from_csv(text)
    assert back.to_csv() == text
    assert back.entries[0, 0] == 0.1 + 0.2


def test_list_round_trip():
    m = upper([[0.25, 0.5], [0, 0.75]])
    assert m.to_list() == [[0.25, 0.5], [None, 0.75]]
    assert AccuracyMatrix.from_list(m.to_list()).to_csv() == m.to_csv()


def test_average_curve_ends_at_acc():
    m = upper([[0.75, 0.5, 0.25], [0, 1.0, 0.5], [0, 0, 0.875]])
    curve = average_accuracy_curve(m)
    assert curve[0] == 0.75 and curve[1] == 0.75
    assert curve[-1] == compute_acc(m)


def data_with(labels, rows=None):
    labels = np.asarray(labels)
    rows = np.arange(len(labels)) if rows is None else np.asarray(rows)
    return Dataset(rows[:, None].astype(float), labels, 4)


def test_uniform_model_ties_go_to_lowest_class():
    labels = [0, 1, 2, 0, 3, 0]
    model = MLP([1, 4])
    assert evaluate_accuracy(model, data_with(labels)) == 0.5
    assert evaluate_accuracy(model, data_with(labels), head_mask=[1, 3]) == 1 / 6


def test_perfect_and_excluded_models():
    labels = [2, 1, 0]
    logits = np.eye(4)[labels]
    assert evaluate_accuracy(Fixed(logits), data_with(labels)) == 1.0
    assert evaluate_accuracy(Fixed(logits), data_with(labels), head_mask=[3]) == 0.0


def test_chunked_evaluation_matches_single_pass():
    rng = np.random.default_rng(0)
    labels = rng.integers(0, 4, 50)
    logits = rng.normal(size=(50, 4))
    ds = data_with(labels)
    assert evaluate_accuracy(Fixed(logits), ds, chunk=7) == evaluate_accuracy(Fixed(logits), ds)


def test_empty_test_set_rejected():
    with pytest.raises(ValueError):
        evaluate_accuracy(MLP([1, 4]), Dataset(np.zeros((0, 1)), np.zeros(0, int), 4))
