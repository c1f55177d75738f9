import numpy as np
import pytest
from hypothesis import given, strategies as st

from qs3orao.thresholds import ThresholdError, Thresholds, fit_thresholds, hinge_penalty, predict_label


def test_three_class_example():
    th = fit_thresholds([-2.0, 0.0, 2.0], [1, 2, 3], 3)
    np.testing.assert_allclose(th.b, [-1.0, 1.0], atol=1e-12)


def test_two_class_midpoint_example():
    th = fit_thresholds([-10.0, 10.0], [1, 2], 2)
    assert th.b.tolist() == [0.0]


def test_zero_margin_midpoints():
    th = fit_thresholds([-2.0, 0.0, 2.0], [1, 2, 3], 3, margin=0.0)
    np.testing.assert_allclose(th.b, [-1.0, 1.0], atol=1e-12)
    with pytest.raises(ThresholdError):
        fit_thresholds([-2.0, 2.0], [1, 2], 2, margin=-1.0)


def test_empty_class_error():
    with pytest.raises(ThresholdError):
        fit_thresholds([0.0, 1.0], [1, 3], 3)


def test_predict_label_examples():
    th = Thresholds([-1.0, 1.0])
    assert predict_label(0.5, th) == 2
    assert predict_label(-5.0, th) == 1
    assert predict_label(-1.0, th) == 2
    assert predict_label(1.0, th) == 3
    assert predict_label(np.array([-5.0, 0.5, 9.0]), th).tolist() == [1, 2, 3]
    with pytest.raises(ThresholdError):
        predict_label(0.0, Thresholds([1.0, 1.0]))


def grid_check(scores, labels, k, b, margin=1.0, resolution=1e-4):
    """No point of a dense grid beats the fitted threshold (up to the grid step's slope)."""
    lo, hi = scores.min() - 5, scores.max() + 5
    grid = np.arange(lo, hi + resolution, resolution)
    for j in range(1, k):
        pos, neg = scores[labels > j], scores[labels <= j]
        at_b = hinge_penalty(b[j - 1], pos, neg, margin)
        best = hinge_penalty(grid, pos, neg, margin).min()
        # the argmin is a breakpoint, so the grid can miss it by at most one step of slope n
        assert at_b <= best + 1e-9 * (1 + best)
        assert best <= at_b + resolution * scores.size + 1e-9


def test_random_four_class_fixture_matches_grid(rng):
    labels = np.repeat([1, 2, 3, 4], 10)
    scores = labels + rng.normal(0, 1.5, labels.size)
    th = fit_thresholds(scores, labels, 4)
    grid_check(scores, labels, 4, th.b)


labels_st = st.lists(st.integers(1, 4), min_size=4, max_size=30).filter(lambda l: len(set(l)) == 4)


@given(labels_st, st.data())
def test_ordering_and_optimality(labels, data):
    labels = np.array(labels)
    scores = np.array(data.draw(st.lists(st.integers(-40, 40), min_size=labels.size,
                                         max_size=labels.size))) / 8.0
    th = fit_thresholds(scores, labels, 4)
    assert th.is_strictly_increasing()
    for j in range(1, 4):
        pos, neg = scores[labels > j], scores[labels <= j]
        # convexity: the fitted point is no worse than every breakpoint
        cand = np.concatenate([pos - 1, neg + 1])
        assert hinge_penalty(th.b[j - 1], pos, neg) <= hinge_penalty(cand, pos, neg).min() + 1e-6


@given(labels_st, st.data(), st.floats(-100, 100))
def test_shift_equivariance(labels, data, c):
    labels = np.array(labels)
    scores = np.array(data.draw(st.lists(st.integers(-40, 40), min_size=labels.size,
                                         max_size=labels.size))) / 4.0
    c = round(c * 4) / 4  # dyadic shift keeps every breakpoint exact
    a = fit_thresholds(scores, labels, 4).b
    b = fit_thresholds(scores + c, labels, 4).b
    np.testing.assert_allclose(b, a + c, rtol=0, atol=1e-7 * (1 + abs(c)))


def test_ties_become_strict():
    th = fit_thresholds([0.0, 0.0, 0.0, 5.0], [1, 2, 3, 3], 3, margin=0.0)
    assert th.b[0] == 0.0
    assert 0.0 < th.b[1] <= 1e-8
    assert predict_label(-1.0, th) == 1
    assert predict_label(0.0, th) == 2
