import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from intervalrp.errors import DimMismatch, SeriesTooShort
from intervalrp.imaging import (
    PI_OVER_18,
    DegenerateDistancesWarning,
    EmbeddingSpec,
    ThresholdSpec,
    embed,
    jrp,
    resolve_threshold,
    rp,
    rp_hard,
    rp_smooth,
    threshold_from_distances,
)

series_st = st.integers(3, 25).flatmap(
    lambda T: arrays(np.float64, T, elements=st.floats(-3, 3, allow_nan=False)))
emb_st = st.builds(EmbeddingSpec, st.integers(1, 3), st.integers(1, 2))


def test_embedding_examples():
    assert EmbeddingSpec(2, 1).n_trajectories(100) == 99
    x = np.arange(5.0)
    assert np.array_equal(embed(x, EmbeddingSpec()), x[:, None])
    assert embed([1, 2, 3, 4], EmbeddingSpec(2, 2)).tolist() == [[1, 3], [2, 4]]
    with pytest.raises(SeriesTooShort):
        embed([1, 2, 3], EmbeddingSpec(3, 1))
    with pytest.raises(ValueError):
        EmbeddingSpec(0, 1)


def test_threshold_spec():
    assert ThresholdSpec.parse("fixed:pi/18").value == pytest.approx(0.17453292519943295)
    assert ThresholdSpec.parse("q:0.25") == ThresholdSpec.quantile(0.25)
    assert ThresholdSpec.parse(str(ThresholdSpec.fixed(0.3))) == ThresholdSpec.fixed(0.3)
    for bad in ("fixed:-1", "q:1.5", "median:3"):
        with pytest.raises(ValueError):
            ThresholdSpec.parse(bad)


def test_resolve_threshold_examples():
    emb = EmbeddingSpec()
    assert resolve_threshold([0.0, 1.0], emb, ThresholdSpec.fixed(PI_OVER_18)) == PI_OVER_18
    # off-diagonal distances {1, 2, 3}
    assert resolve_threshold([0.0, 1.0, 3.0], emb, ThresholdSpec.quantile(0.5)) == 2.0
    rng = np.random.default_rng(0)
    d = np.zeros((101, 101))
    iu = np.triu_indices(101, 1)
    d[iu] = rng.uniform(0, 1, iu[0].size)
    assert abs(threshold_from_distances(d + d.T, ThresholdSpec.quantile(0.1)) - 0.1) < 0.05


def test_degenerate_quantile_warns():
    with pytest.warns(DegenerateDistancesWarning):
        eps = resolve_threshold(np.ones(6), EmbeddingSpec(), ThresholdSpec.quantile(0.3))
    assert eps == 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateDistancesWarning)
        img = rp_hard(np.ones(6), EmbeddingSpec(), ThresholdSpec.quantile(0.3))
    assert np.all(img.values == 1.0)


def test_hard_examples():
    emb = EmbeddingSpec()
    assert np.all(rp_hard(np.full(7, 2.5), emb, ThresholdSpec.fixed(0.01)).values == 1)
    img = rp_hard([0.0, 1.0, 3.0, 7.0], emb, ThresholdSpec.fixed(0.5)).values
    assert np.array_equal(img, np.eye(4))
    x = np.array([0.0, 1.0, 0.0, 1.0])
    img = rp_hard(x, emb, ThresholdSpec.fixed(0.5)).values
    brute = np.array([[1.0 if x[j] == x[k] else 0.0 for k in range(4)] for j in range(4)])
    assert np.array_equal(img, brute)
    # closed threshold: a distance equal to eps counts as a recurrence
    assert rp_hard([0.0, 0.5], emb, ThresholdSpec.fixed(0.5)).values[0, 1] == 1.0


def test_smooth_examples():
    emb = EmbeddingSpec()
    assert rp_smooth([0.0, 0.25], emb, ThresholdSpec.fixed(0.25), 7.0).values[0, 1] == 0.5
    v = rp_smooth([0.0, 0.1], emb, ThresholdSpec.fixed(0.2), 20.0).values[0, 1]
    assert v == pytest.approx((1 + math.tanh(2.0)) / 2) and v == pytest.approx(0.98201, abs=5e-6)
    for nu in (1, 5, 10, 15, 20):
        assert rp([0.0, 1.0, 2.0], emb, ThresholdSpec(), float(nu)).smooth
    with pytest.raises(ValueError):
        rp_smooth([0.0, 1.0], emb, ThresholdSpec(), 0.0)


def test_diagonal_values():
    x = np.random.default_rng(2).normal(size=12)
    assert np.all(np.diag(rp_hard(x, EmbeddingSpec(), ThresholdSpec.fixed(0.2)).values) == 1)
    d = np.diag(rp_smooth(x, EmbeddingSpec(), ThresholdSpec.fixed(0.2), 5.0).values)
    assert np.allclose(d, (1 + math.tanh(5.0 * 0.2)) / 2, rtol=0, atol=1e-15)


def test_jrp_examples():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(2, 15))
    emb, thr = EmbeddingSpec(2, 1), ThresholdSpec.fixed(0.8)
    hard = jrp(X, emb, [thr, thr]).values
    a, b = (rp(X[j], emb, thr).values.astype(bool) for j in range(2))
    assert np.array_equal(hard.astype(bool), a & b)
    with pytest.raises(DimMismatch):
        jrp(X, emb, [thr])
    Z = np.vstack([X[0], np.linspace(0, 100, 15)])
    assert np.all(jrp(Z, emb, ThresholdSpec.fixed(0.01)).values[~np.eye(14, dtype=bool)] == 0)


@given(series_st, emb_st, st.floats(0.05, 2.0), st.sampled_from([None, 1.0, 5.0, 10.0]))
def test_symmetry_and_range(x, emb, eps, nu):
    if emb.n_trajectories(x.size) < 2:
        return
    v = rp(x, emb, ThresholdSpec.fixed(eps), nu).values
    assert np.array_equal(v, v.T)
    assert np.all((v >= 0) & (v <= 1))
    if nu is None:
        assert set(np.unique(v)) <= {0.0, 1.0}


@given(series_st, emb_st, st.floats(0.05, 2.0), st.sampled_from([None, 1.0, 10.0]))
def test_jrp_of_one_is_rp(x, emb, eps, nu):
    if emb.n_trajectories(x.size) < 2:
        return
    thr = ThresholdSpec.fixed(eps)
    assert np.array_equal(jrp(x[None], emb, [thr], nu).values, rp(x, emb, thr, nu).values)


def test_smooth_to_hard_bound():
    rng = np.random.default_rng(8)
    nu, delta = 50.0, 0.1
    bound = (1 - math.tanh(nu * delta)) / 2
    checked = 0
    while checked < 200:
        x = rng.normal(size=int(rng.integers(4, 20)))
        emb = EmbeddingSpec(int(rng.integers(1, 3)), 1)
        from intervalrp.imaging import distances
        d = distances(x, emb)
        eps = float(rng.uniform(0.2, 1.5))
        if np.min(np.abs(eps - d)) < delta:
            continue
        thr = ThresholdSpec.fixed(eps)
        dev = np.max(np.abs(rp(x, emb, thr, nu).values - rp(x, emb, thr).values))
        assert dev <= bound + 1e-15 and dev < 1e-4
        checked += 1


@given(series_st, st.floats(0.05, 1.0), st.floats(0.5, 20), st.floats(0.0, 20))
def test_monotone_in_nu(x, eps, nu, extra):
    emb = EmbeddingSpec()
    thr = ThresholdSpec.fixed(eps)
    from intervalrp.imaging import distances
    d = distances(x, emb)
    lo, hi = rp(x, emb, thr, nu).values, rp(x, emb, thr, nu + extra).values
    assert np.all(hi[d < eps] >= lo[d < eps])
    assert np.all(hi[d > eps] <= lo[d > eps])
