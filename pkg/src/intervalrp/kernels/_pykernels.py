"""Vectorised numpy implementations of the hot kernels.

Used when the compiled extension is unavailable, and as the reference the
compiled versions are checked against. All arrays are float64, C-contiguous.
Images and feature maps are laid out ``(N, C, H, W)``; kernels ``(Co, Ci, kh, kw)``.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def trajectory_distances(c, m, kappa):
    """Euclidean distances between all pairs of delay-embedded trajectories."""
    c = np.asarray(c, dtype=np.float64)
    S = c.shape[0] - (m - 1) * kappa
    d2 = np.zeros((S, S))
    for s in range(m):
        cs = c[s * kappa : s * kappa + S]
        diff = cs[:, None] - cs[None, :]
        d2 += diff * diff
    return np.sqrt(d2)


def smooth_rp_slope(dist, eps, nu):
    """d/dd of (1 + tanh(nu*(eps - d)))/2, i.e. -nu/2 * sech^2(nu*(eps - d))."""
    x = nu * (eps - dist)
    with np.errstate(over="ignore"):
        sech = 1.0 / np.cosh(x)
    return -0.5 * nu * sech * sech


def series_grad(c, dist, G, eps, nu, m, kappa):
    """Pull an upstream image gradient ``G = dL/dR`` back to the point series.

    Returns ``dL/dC`` (length T) for the smooth recurrence image
    ``R = (1 + tanh(nu*(eps - dist)))/2``. Pairs at zero distance contribute
    nothing (subgradient 0 of the norm).
    """
    c = np.asarray(c, dtype=np.float64)
    S = dist.shape[0]
    slope = smooth_rp_slope(dist, eps, nu)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(dist > 0.0, slope / dist, 0.0)
    V = (G + G.T) * f
    rowsum = V.sum(axis=1)
    out = np.zeros(c.shape[0])
    for s in range(m):
        cs = c[s * kappa : s * kappa + S]
        out[s * kappa : s * kappa + S] += cs * rowsum - V @ cs
    return out


def conv2d_valid(x, k):
    """Valid cross-correlation of every input map with every kernel."""
    kh, kw = k.shape[2], k.shape[3]
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))  # N, Ci, Ho, Wo, kh, kw
    out = np.tensordot(win, k, axes=([1, 4, 5], [1, 2, 3]))  # N, Ho, Wo, Co
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def conv2d_backward(x, k, gout):
    """Gradients of a valid convolution w.r.t. its kernel and its input.

    The input gradient is the zero-padded ("wide") convolution of ``gout``
    with the 180-degree rotated kernels.
    """
    kh, kw = k.shape[2], k.shape[3]
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    gk = np.tensordot(gout, win, axes=([0, 2, 3], [0, 2, 3]))  # Co, Ci, kh, kw
    padded = np.pad(gout, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
    pwin = sliding_window_view(padded, (kh, kw), axis=(2, 3))  # N, Co, H, W, kh, kw
    rot = k[:, :, ::-1, ::-1]
    gx = np.tensordot(pwin, rot, axes=([1, 4, 5], [0, 2, 3]))  # N, H, W, Ci
    return np.ascontiguousarray(gk), np.ascontiguousarray(gx.transpose(0, 3, 1, 2))


def maxpool_forward(x, w):
    """Non-overlapping ``w x w`` max pooling; trailing rows/cols are dropped.

    Returns the pooled maps and the flat in-window index of each maximum
    (first maximiser in row-major order on ties).
    """
    N, C, H, W = x.shape
    Ho, Wo = H // w, W // w
    blocks = x[:, :, : Ho * w, : Wo * w].reshape(N, C, Ho, w, Wo, w)
    blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(N, C, Ho, Wo, w * w)
    idx = np.argmax(blocks, axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx.astype(np.intp)


def maxpool_backward(gout, idx, w, in_shape):
    N, C, H, W = in_shape
    Ho, Wo = gout.shape[2], gout.shape[3]
    blocks = np.zeros((N, C, Ho, Wo, w * w))
    np.put_along_axis(blocks, idx[..., None], gout[..., None], axis=-1)
    blocks = blocks.reshape(N, C, Ho, Wo, w, w).transpose(0, 1, 2, 4, 3, 5)
    gx = np.zeros(in_shape)
    gx[:, :, : Ho * w, : Wo * w] = blocks.reshape(N, C, Ho * w, Wo * w)
    return gx
