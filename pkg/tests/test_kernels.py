"""The compiled kernels and the numpy fallback must agree."""

import numpy as np
import pytest

from intervalrp.kernels import _pykernels as py

try:
    from intervalrp.kernels import _ckernels as cy
except ImportError:  # extension not built
    cy = None

needs_c = pytest.mark.skipif(cy is None, reason="compiled kernels not built")


@needs_c
@pytest.mark.parametrize("m,kappa", [(1, 1), (2, 1), (3, 2)])
def test_distances_and_series_grad(m, kappa):
    rng = np.random.default_rng(m * 10 + kappa)
    for _ in range(20):
        T = int(rng.integers((m - 1) * kappa + 2, 40))
        c = rng.normal(size=T)
        c[rng.integers(T)] = c[0]
        d1 = py.trajectory_distances(c, m, kappa)
        d2 = cy.trajectory_distances(c, m, kappa)
        assert np.allclose(d1, d2, rtol=1e-14, atol=1e-15)
        S = d1.shape[0]
        G = rng.normal(size=(S, S))
        s1 = py.smooth_rp_slope(d1, 0.3, 5.0)
        assert np.allclose(s1, cy.smooth_rp_slope(d1, 0.3, 5.0), rtol=1e-14, atol=1e-300)
        g1 = py.series_grad(c, d1, G, 0.3, 5.0, m, kappa)
        g2 = cy.series_grad(c, d1, G, 0.3, 5.0, m, kappa)
        assert np.allclose(g1, g2, rtol=1e-11, atol=1e-13)


@needs_c
def test_conv_and_pool():
    rng = np.random.default_rng(5)
    for _ in range(10):
        N, ci, co, H, k = (int(rng.integers(1, 4)), int(rng.integers(1, 3)), int(rng.integers(1, 4)),
                           int(rng.integers(5, 14)), int(rng.integers(1, 4)))
        x = rng.normal(size=(N, ci, H, H))
        K = rng.normal(size=(co, ci, k, k))
        y1, y2 = py.conv2d_valid(x, K), cy.conv2d_valid(x, K)
        assert np.allclose(y1, y2, rtol=1e-12, atol=1e-12)
        g = rng.normal(size=y1.shape)
        for a, b in zip(py.conv2d_backward(x, K, g), cy.conv2d_backward(x, K, g)):
            assert np.allclose(a, b, rtol=1e-12, atol=1e-12)
        w = int(rng.integers(1, 4))
        y = np.round(y1, 1)  # force ties
        o1, i1 = py.maxpool_forward(y, w)
        o2, i2 = cy.maxpool_forward(y, w)
        assert np.array_equal(o1, o2) and np.array_equal(i1, i2)
        go = rng.normal(size=o1.shape)
        b1 = py.maxpool_backward(go, i1, w, y.shape)
        b2 = cy.maxpool_backward(go, i2, w, y.shape)
        assert np.array_equal(b1, b2)


def test_pool_first_argmax_and_mass():
    x = np.array([[[[1.0, 3.0], [3.0, 0.0]]]])
    out, idx = py.maxpool_forward(x, 2)
    g = py.maxpool_backward(np.array([[[[2.0]]]]), idx, 2, x.shape)
    assert out[0, 0, 0, 0] == 3.0 and g[0, 0, 0, 1] == 2.0 and g.sum() == 2.0


def test_backend_env_switch():
    import subprocess
    import sys
    code = "import intervalrp.kernels as k; print(k.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env={"INTERVALRP_PURE_PYTHON": "1", "PATH": ""},
                         capture_output=True, text=True, check=True).stdout.strip()
    assert out == "python"
