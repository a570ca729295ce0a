import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from intervalrp import gradcheck
from intervalrp.core import IntervalSeries, MvIntervalSeries, convex_combination
from intervalrp.errors import ShapeMismatch
from intervalrp.gradients import (
    alpha_gradient,
    backprop_to_alpha,
    backprop_to_alpha_mean,
    d_dist_d_alpha,
    d_jrp_d_alpha,
    d_rp_smooth_d_alpha,
    smooth_image,
)
from intervalrp.imaging import EmbeddingSpec, ThresholdSpec, distances, rp


def random_bounds(rng, T, p=None):
    shape = (T,) if p is None else (p, T)
    c = np.cumsum(rng.normal(0, 0.2, size=shape), axis=-1)
    h = rng.uniform(0.05, 0.3, size=shape)
    return (IntervalSeries if p is None else MvIntervalSeries)(c - h, c + h)


def dist_fd(b, alpha, emb, j, k, t, h=1e-6):
    def d(a):
        e = distances(convex_combination(b, a), emb)
        return e[j, k]
    ap, am = alpha.copy(), alpha.copy()
    ap[t] += h
    am[t] -= h
    return (d(ap) - d(am)) / (2 * h)


def test_dist_derivative_examples():
    rng = np.random.default_rng(0)
    emb = EmbeddingSpec(2, 1)
    b = random_bounds(rng, 12)
    alpha = rng.uniform(0.1, 0.9, 12)
    worst = 0.0
    for j in range(11):
        for k in range(11):
            if j == k:
                continue
            for t in range(12):
                a = d_dist_d_alpha(b, alpha, emb, j, k, t)
                f = dist_fd(b, alpha, emb, j, k, t)
                worst = max(worst, abs(a - f) / (abs(f) + 1e-8))
                if t not in (j, j + 1, k, k + 1):
                    assert a == 0.0
    assert worst < 1e-6
    lo = b.lower.copy()
    lo[4] = b.upper[4]
    deg = IntervalSeries(lo, b.upper)
    assert d_dist_d_alpha(deg, alpha, emb, 4, 8, 4) == 0.0
    same = IntervalSeries(np.zeros(5), np.ones(5))
    assert d_dist_d_alpha(same, np.full(5, 0.5), EmbeddingSpec(), 0, 1, 0) == 0.0


def test_constant_bounds_zero_gradient():
    b = IntervalSeries(np.linspace(0, 1, 9), np.linspace(0, 1, 9))
    J = d_rp_smooth_d_alpha(b, np.full(9, 0.3), EmbeddingSpec(2, 1), ThresholdSpec.fixed(0.2), 5.0)
    assert np.all(J.dense() == 0)


def test_small_nu_vanishes():
    rng = np.random.default_rng(1)
    b = random_bounds(rng, 10)
    a = np.full(10, 0.5)
    mags = [np.abs(d_rp_smooth_d_alpha(b, a, EmbeddingSpec(), ThresholdSpec.fixed(0.2), nu).dense()).max()
            for nu in (1e-1, 1e-3, 1e-5)]
    assert mags[0] > mags[1] > mags[2] and mags[2] < 1e-5


def _ref_jac(b, alpha, emb, eps, nu):
    f = lambda a: gradcheck.ref_image(b.lower, b.upper, a, emb.m, emb.kappa, eps, nu)  # noqa: E731
    return np.stack([gradcheck.fd_derivative(f, alpha, t) for t in range(alpha.size)])


@pytest.mark.parametrize("m,kappa,thr", [(1, 1, ThresholdSpec.fixed(0.3)), (2, 1, ThresholdSpec.quantile(0.4)),
                                         (3, 2, ThresholdSpec.fixed(0.5))])
def test_univariate_jacobian_fd(m, kappa, thr):
    rng = np.random.default_rng(m + 7 * kappa)
    emb = EmbeddingSpec(m, kappa)
    b = random_bounds(rng, 14)
    alpha = rng.uniform(0.1, 0.9, 14)
    eps = [rp(convex_combination(b, alpha), emb, thr).eps]
    J = d_rp_smooth_d_alpha(b, alpha, emb, thr, 5.0)
    assert gradcheck.rel_err(J.dense(), _ref_jac(b, alpha, emb, eps, 5.0)) < 1e-5


def test_multivariate_jacobian_fd():
    rng = np.random.default_rng(3)
    emb = EmbeddingSpec(2, 1)
    b = random_bounds(rng, 12, p=3)
    alpha = rng.uniform(0.1, 0.9, 3)
    thr = ThresholdSpec.fixed(0.4)
    J = d_jrp_d_alpha(b, alpha, emb, thr, 5.0)
    assert gradcheck.rel_err(J.dense(), _ref_jac(b, alpha, emb, [0.4] * 3, 5.0)) < 1e-5


def test_jrp_gradient_reduces_and_annihilates():
    rng = np.random.default_rng(4)
    emb, thr = EmbeddingSpec(), ThresholdSpec.fixed(0.3)
    b1 = random_bounds(rng, 9)
    mv = MvIntervalSeries(b1.lower[None], b1.upper[None])
    a = 0.4
    Jm = d_jrp_d_alpha(mv, [a], emb, thr, 5.0).dense()[0]
    Ju = d_rp_smooth_d_alpha(b1, np.full(9, a), emb, thr, 5.0).dense().sum(axis=0)
    assert np.allclose(Jm, Ju, rtol=0, atol=1e-15)
    far = np.arange(9.0) * 100.0
    mv2 = MvIntervalSeries(np.vstack([b1.lower, far]), np.vstack([b1.upper, far + 0.01]))
    J = d_jrp_d_alpha(mv2, [a, 0.5], emb, thr, 5.0).dense()[0]
    assert np.all(J[~np.eye(9, dtype=bool)] == 0.0)


def test_jacobian_symmetry_and_sparsity():
    rng = np.random.default_rng(5)
    for m, kappa in [(1, 1), (2, 2), (3, 1)]:
        emb = EmbeddingSpec(m, kappa)
        b = random_bounds(rng, 30)
        J = d_rp_smooth_d_alpha(b, rng.uniform(0, 1, 30), emb, ThresholdSpec.fixed(0.3), 5.0)
        S = J.size
        D = J.dense()
        assert np.array_equal(D, D.transpose(0, 2, 1))
        for t in range(30):
            assert J.nnz(t) <= 2 * m * S
            owners = {t - s * kappa for s in range(m) if 0 <= t - s * kappa < S}
            r, c, _ = J.entries.get(t, (np.array([], int), np.array([], int), None))
            assert all(i in owners or j in owners for i, j in zip(r, c))


def test_backprop_examples():
    rng = np.random.default_rng(6)
    b = random_bounds(rng, 10)
    alpha = rng.uniform(0, 1, 10)
    emb, thr = EmbeddingSpec(2, 1), ThresholdSpec.fixed(0.3)
    J = d_rp_smooth_d_alpha(b, alpha, emb, thr, 5.0)
    S = J.size
    assert np.all(backprop_to_alpha(np.zeros((S, S)), J) == 0)
    E = np.zeros((S, S))
    E[2, 5] = 1.0
    assert np.array_equal(backprop_to_alpha(E, J), J.dense()[:, 2, 5])
    with pytest.raises(ShapeMismatch):
        backprop_to_alpha(np.zeros((S + 1, S + 1)), J)
    g = backprop_to_alpha(np.ones((S, S)), J)
    f = lambda a: gradcheck.ref_image(b.lower, b.upper, a, 2, 1, [0.3], 5.0).sum()  # noqa: E731
    fd = np.array([gradcheck.fd_derivative(f, alpha, t) for t in range(10)])
    assert gradcheck.rel_err(g, fd) < 1e-5
    assert np.allclose(backprop_to_alpha_mean([np.ones((S, S))] * 2, [J, J]), g)


@given(st.integers(0, 10_000), st.booleans(), st.sampled_from([ThresholdSpec.fixed(0.3), ThresholdSpec.quantile(0.3)]))
def test_fused_matches_sparse(seed, mv, thr):
    rng = np.random.default_rng(seed)
    emb = EmbeddingSpec(int(rng.integers(1, 4)), int(rng.integers(1, 3)))
    b = random_bounds(rng, 15, p=3 if mv else None)
    alpha = rng.uniform(0, 1, 3 if mv else 15)
    img = smooth_image(b, alpha, emb, thr, 5.0)
    G = rng.normal(size=img.shape)
    J = (d_jrp_d_alpha if mv else d_rp_smooth_d_alpha)(b, alpha, emb, thr, 5.0)
    assert np.allclose(alpha_gradient(b, alpha, emb, thr, 5.0, G), backprop_to_alpha(G, J), rtol=1e-10, atol=1e-13)


@given(st.integers(0, 10_000), st.floats(0.2, 5.0))
def test_scale_invariance(seed, c):
    rng = np.random.default_rng(seed)
    emb = EmbeddingSpec(2, 1)
    b = random_bounds(rng, 12)
    bc = IntervalSeries(c * b.lower, c * b.upper)
    alpha = rng.uniform(0, 1, 12)
    i1 = smooth_image(b, alpha, emb, ThresholdSpec.fixed(0.3), 5.0)
    i2 = smooth_image(bc, alpha, emb, ThresholdSpec.fixed(0.3 * c), 5.0 / c)
    assert np.allclose(i1, i2, rtol=0, atol=1e-12)
    g1 = d_rp_smooth_d_alpha(b, alpha, emb, ThresholdSpec.fixed(0.3), 5.0).dense()
    g2 = d_rp_smooth_d_alpha(bc, alpha, emb, ThresholdSpec.fixed(0.3 * c), 5.0 / c).dense()
    assert np.allclose(g1, g2, rtol=1e-9, atol=1e-12)


def test_gradcheck_suite_small():
    rep = gradcheck.run(seed=1, trials=10)
    assert rep.passed, rep.as_dict()
