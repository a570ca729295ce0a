import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from intervalrp.core import (
    Axis,
    CenterRange,
    CombinationCoefficients,
    IntervalSeries,
    MvIntervalSeries,
    convex_combination,
    convex_combination_mv,
    from_center_range,
    to_center_range,
)
from intervalrp.errors import InvalidInterval, LengthMismatch, NegativeRange

finite = st.floats(-1e6, 1e6, allow_nan=False)


@st.composite
def interval_series(draw, max_T=30):
    T = draw(st.integers(2, max_T))
    a = draw(arrays(np.float64, T, elements=finite))
    b = draw(arrays(np.float64, T, elements=finite))
    return IntervalSeries(np.minimum(a, b), np.maximum(a, b))


def test_series_validation():
    with pytest.raises(InvalidInterval):
        IntervalSeries([1.0, 2.0], [0.0, 3.0])
    with pytest.raises(InvalidInterval):
        IntervalSeries([1.0], [2.0])
    with pytest.raises(InvalidInterval):
        IntervalSeries([1.0, 2.0], [2.0, 3.0, 4.0])
    with pytest.raises(InvalidInterval):
        MvIntervalSeries(np.zeros((2, 3)), -np.ones((2, 3)))
    s = IntervalSeries([0.0, 1.0], [1.0, 1.0], label=2)
    assert s.T == 2 and s.label == 2
    with pytest.raises(ValueError):
        s.lower[0] = 5.0


def test_coefficients_box():
    with pytest.raises(InvalidInterval):
        CombinationCoefficients([0.5, 1.2])
    c = CombinationCoefficients.constant(0.3, 4, Axis.PER_DIM)
    assert c.axis is Axis.PER_DIM and np.all(c.alpha == 0.3)


@pytest.mark.parametrize("lo,up,c,r", [(1, 3, 2, 1), (5, 5, 5, 0), (-2, 4, 1, 3)])
def test_to_center_range_examples(lo, up, c, r):
    cr = to_center_range(IntervalSeries([lo, lo], [up, up]))
    assert np.all(cr.center == c) and np.all(cr.range == r)


def test_from_center_range_examples():
    s = from_center_range(CenterRange([2.0, 0.0], [1.0, 0.0]))
    assert s.lower.tolist() == [1.0, 0.0] and s.upper.tolist() == [3.0, 0.0]
    with pytest.raises(NegativeRange):
        from_center_range(CenterRange([1.5, 1.5], [-0.5, 0.0]))
    s = from_center_range(CenterRange([1.5, 1.5], [-0.5, 0.0]), clamp=True)
    assert s.lower.tolist() == [1.5, 1.5] and s.upper.tolist() == [1.5, 1.5]
    back = to_center_range(s)
    assert back.center.tolist() == [1.5, 1.5] and back.range.tolist() == [0.0, 0.0]


def test_convex_combination_examples():
    s = IntervalSeries([0.0, 0.0], [2.0, 4.0])
    assert convex_combination(s, [0.25, 0.75]).tolist() == [1.5, 1.0]
    assert convex_combination(s, np.zeros(2)).tolist() == s.upper.tolist()
    assert np.array_equal(convex_combination(s, np.full(2, 0.5)), to_center_range(s).center)
    with pytest.raises(LengthMismatch):
        convex_combination(s, [0.5])
    with pytest.raises(LengthMismatch):
        convex_combination(s, CombinationCoefficients([0.5, 0.5], Axis.PER_DIM))


def test_convex_combination_mv_examples():
    lo = np.array([[0.0, 1.0], [2.0, 3.0]])
    up = lo + np.array([[1.0, 1.0], [5.0, 5.0]])
    s = MvIntervalSeries(lo, up)
    D = convex_combination_mv(s, [0.0, 1.0])
    assert D[0].tolist() == up[0].tolist() and D[1].tolist() == lo[1].tolist()
    assert np.array_equal(convex_combination_mv(s, np.ones(2)), lo)
    one = MvIntervalSeries(lo[:1], up[:1])
    assert np.array_equal(convex_combination_mv(one, [0.3])[0],
                          convex_combination(one.dim(0), np.full(2, 0.3)))
    with pytest.raises(LengthMismatch):
        convex_combination_mv(s, [0.5])


@given(interval_series(), st.data())
def test_combination_stays_inside_interval(s, data):
    a = data.draw(arrays(np.float64, s.T, elements=st.floats(0, 1)))
    c = convex_combination(s, a)
    assert np.all(c >= s.lower - 1e-12 * (1 + np.abs(s.lower)))
    assert np.all(c <= s.upper + 1e-12 * (1 + np.abs(s.upper)))


@given(st.integers(2, 30).flatmap(lambda T: st.tuples(
    arrays(np.float64, T, elements=st.integers(-2**20, 2**20).map(lambda k: k / 64.0)),
    arrays(np.float64, T, elements=st.integers(0, 2**20).map(lambda k: k / 64.0)))))
def test_center_range_roundtrip_exact(cr):
    c, r = cr
    back = to_center_range(from_center_range(CenterRange(c, r)))
    assert np.array_equal(back.center, c) and np.array_equal(back.range, r)


@given(interval_series())
def test_half_alpha_is_center_within_ulp(s):
    c = convex_combination(s, np.full(s.T, 0.5))
    center = to_center_range(s).center
    assert np.all(np.abs(c - center) <= np.spacing(np.maximum(np.abs(center), np.abs(c))) + 1e-300)
