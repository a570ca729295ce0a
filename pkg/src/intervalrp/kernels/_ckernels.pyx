# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels; same signatures as ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, cosh, exp, fabs

cnp.import_array()


def trajectory_distances(double[::1] c, Py_ssize_t m, Py_ssize_t kappa):
    cdef Py_ssize_t T = c.shape[0]
    cdef Py_ssize_t S = T - (m - 1) * kappa
    cdef Py_ssize_t i, j, s, off
    cdef double acc, diff
    out_arr = np.zeros((S, S), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(S):
        for j in range(i + 1, S):
            acc = 0.0
            for s in range(m):
                off = s * kappa
                diff = c[i + off] - c[j + off]
                acc += diff * diff
            acc = sqrt(acc)
            out[i, j] = acc
            out[j, i] = acc
    return out_arr


def smooth_rp_slope(dist, double eps, double nu):
    cdef double[:, ::1] d = np.ascontiguousarray(dist, dtype=np.float64)
    cdef Py_ssize_t S0 = d.shape[0], S1 = d.shape[1], i, j
    cdef double e, q
    out_arr = np.empty((S0, S1), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(S0):
        for j in range(S1):
            # sech^2(x) = 4 e / (1 + e)^2 with e = exp(-2|x|)
            e = exp(-2.0 * fabs(nu * (eps - d[i, j])))
            q = 1.0 + e
            out[i, j] = -2.0 * nu * e / (q * q)
    return out_arr


def series_grad(double[::1] c, dist, G, double eps, double nu,
                Py_ssize_t m, Py_ssize_t kappa):
    cdef double[:, ::1] d = np.ascontiguousarray(dist, dtype=np.float64)
    cdef double[:, ::1] g = np.ascontiguousarray(G, dtype=np.float64)
    cdef Py_ssize_t S = d.shape[0], T = c.shape[0]
    cdef Py_ssize_t i, j, s, off
    cdef double dij, ch, w, diff
    out_arr = np.zeros(T, dtype=np.float64)
    cdef double[::1] out = out_arr
    for i in range(S):
        for j in range(i + 1, S):
            dij = d[i, j]
            if dij <= 0.0:
                continue
            ch = cosh(nu * (eps - dij))
            # each unordered pair appears twice in the image
            w = (g[i, j] + g[j, i]) * (-0.5 * nu / (ch * ch)) / dij
            if w == 0.0:
                continue
            for s in range(m):
                off = s * kappa
                diff = w * (c[i + off] - c[j + off])
                out[i + off] += diff
                out[j + off] -= diff
    return out_arr


def conv2d_valid(x, k):
    cdef double[:, :, :, ::1] X = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, :, :, ::1] K = np.ascontiguousarray(k, dtype=np.float64)
    cdef Py_ssize_t N = X.shape[0], Ci = X.shape[1], H = X.shape[2], W = X.shape[3]
    cdef Py_ssize_t Co = K.shape[0], kh = K.shape[2], kw = K.shape[3]
    cdef Py_ssize_t Ho = H - kh + 1, Wo = W - kw + 1
    cdef Py_ssize_t n, o, ci, a, b, r, q
    cdef double kv
    out_arr = np.zeros((N, Co, Ho, Wo), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    for n in range(N):
        for o in range(Co):
            for ci in range(Ci):
                for a in range(kh):
                    for b in range(kw):
                        kv = K[o, ci, a, b]
                        for r in range(Ho):
                            for q in range(Wo):
                                out[n, o, r, q] += kv * X[n, ci, r + a, q + b]
    return out_arr


def conv2d_backward(x, k, gout):
    cdef double[:, :, :, ::1] X = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, :, :, ::1] K = np.ascontiguousarray(k, dtype=np.float64)
    cdef double[:, :, :, ::1] GO = np.ascontiguousarray(gout, dtype=np.float64)
    cdef Py_ssize_t N = X.shape[0], Ci = X.shape[1], H = X.shape[2], W = X.shape[3]
    cdef Py_ssize_t Co = K.shape[0], kh = K.shape[2], kw = K.shape[3]
    cdef Py_ssize_t Ho = GO.shape[2], Wo = GO.shape[3]
    cdef Py_ssize_t n, o, ci, a, b, r, q
    cdef double acc, kv
    gk_arr = np.zeros((Co, Ci, kh, kw), dtype=np.float64)
    gx_arr = np.zeros((N, Ci, H, W), dtype=np.float64)
    cdef double[:, :, :, ::1] gk = gk_arr
    cdef double[:, :, :, ::1] gx = gx_arr
    for n in range(N):
        for o in range(Co):
            for ci in range(Ci):
                for a in range(kh):
                    for b in range(kw):
                        acc = 0.0
                        kv = K[o, ci, a, b]
                        for r in range(Ho):
                            for q in range(Wo):
                                acc += GO[n, o, r, q] * X[n, ci, r + a, q + b]
                                gx[n, ci, r + a, q + b] += kv * GO[n, o, r, q]
                        gk[o, ci, a, b] += acc
    return gk_arr, gx_arr


def maxpool_forward(x, Py_ssize_t w):
    cdef double[:, :, :, ::1] X = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t N = X.shape[0], C = X.shape[1]
    cdef Py_ssize_t Ho = X.shape[2] // w, Wo = X.shape[3] // w
    cdef Py_ssize_t n, c, r, q, a, b, best
    cdef double v, bv
    out_arr = np.empty((N, C, Ho, Wo), dtype=np.float64)
    idx_arr = np.empty((N, C, Ho, Wo), dtype=np.intp)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t[:, :, :, ::1] idx = idx_arr
    for n in range(N):
        for c in range(C):
            for r in range(Ho):
                for q in range(Wo):
                    bv = X[n, c, r * w, q * w]
                    best = 0
                    for a in range(w):
                        for b in range(w):
                            v = X[n, c, r * w + a, q * w + b]
                            if v > bv:
                                bv = v
                                best = a * w + b
                    out[n, c, r, q] = bv
                    idx[n, c, r, q] = best
    return out_arr, idx_arr


def maxpool_backward(gout, idx, Py_ssize_t w, in_shape):
    cdef double[:, :, :, ::1] GO = np.ascontiguousarray(gout, dtype=np.float64)
    cdef Py_ssize_t[:, :, :, ::1] I = np.ascontiguousarray(idx, dtype=np.intp)
    cdef Py_ssize_t N = GO.shape[0], C = GO.shape[1], Ho = GO.shape[2], Wo = GO.shape[3]
    cdef Py_ssize_t n, c, r, q, p
    gx_arr = np.zeros(tuple(in_shape), dtype=np.float64)
    cdef double[:, :, :, ::1] gx = gx_arr
    for n in range(N):
        for c in range(C):
            for r in range(Ho):
                for q in range(Wo):
                    p = I[n, c, r, q]
                    gx[n, c, r * w + p // w, q * w + p % w] += GO[n, c, r, q]
    return gx_arr
