# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled sorting-network kernels.

Same semantics as kernels.reference, with the layer sweeps as tight C
loops.  Expressions mirror the reference implementation term for term;
the only rounding difference between the backends is that libm's atan
and numpy's vectorised arctan can disagree by one ulp, so results match
to a few ulps rather than bit-for-bit.  Each backend is individually
deterministic.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport atan

cnp.import_array()

cdef double INV_PI = 1.0 / np.pi


cdef inline double _alpha(double diff, double beta) noexcept nogil:
    return atan(beta * diff) * INV_PI + 0.5


cdef inline double _alpha_grad(double diff, double beta) noexcept nogil:
    cdef double bd = beta * diff
    return beta * INV_PI / (1.0 + bd * bd)


def soft_permutation(scores, double beta):
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    cdef Py_ssize_t B = scores.shape[0], n = scores.shape[1]
    perm_arr = np.empty((B, n, n))
    smoothed_arr = np.array(scores, copy=True)
    mix_arr = np.empty((n, n))

    cdef double[:, :] y = smoothed_arr
    cdef double[:, :, :] perm = perm_arr
    cdef double[:, :] mix = mix_arr
    cdef Py_ssize_t b, layer, i, j, c
    cdef double a, yi, mi

    with nogil:
        for b in range(B):
            for i in range(n):
                for c in range(n):
                    mix[i, c] = 1.0 if i == c else 0.0
            for layer in range(n):
                i = layer % 2
                while i + 1 < n:
                    j = i + 1
                    a = _alpha(y[b, j] - y[b, i], beta)
                    yi = y[b, i]
                    y[b, i] = (1.0 - a) * yi + a * y[b, j]
                    y[b, j] = a * yi + (1.0 - a) * y[b, j]
                    for c in range(n):
                        mi = mix[i, c]
                        mix[i, c] = (1.0 - a) * mi + a * mix[j, c]
                        mix[j, c] = a * mi + (1.0 - a) * mix[j, c]
                    i += 2
            for i in range(n):
                for c in range(n):
                    perm[b, c, i] = mix[i, c]
    return perm_arr, smoothed_arr


def fused_forward(scores, double beta, relevance, bias):
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    relevance = np.ascontiguousarray(relevance, dtype=np.float64)
    bias = np.ascontiguousarray(bias, dtype=np.float64)
    cdef Py_ssize_t B = scores.shape[0], n = scores.shape[1]
    cdef Py_ssize_t L = n

    Y_arr = np.empty((L + 1, B, n))
    R_arr = np.empty((L + 1, B, n))
    U_arr = np.empty((L + 1, B, n))
    A_arr = np.zeros((L, B, n // 2 if n > 1 else 1))
    Y_arr[0] = scores
    R_arr[0] = relevance
    U_arr[L] = bias[None, :]

    cdef double[:, :, :] Y = Y_arr
    cdef double[:, :, :] R = R_arr
    cdef double[:, :, :] U = U_arr
    cdef double[:, :, :] A = A_arr
    cdef Py_ssize_t b, l, i, j, p
    cdef double a, yi, ri, ui

    with nogil:
        for b in range(B):
            for l in range(L):
                for i in range(n):
                    Y[l + 1, b, i] = Y[l, b, i]
                    R[l + 1, b, i] = R[l, b, i]
                i = l % 2
                p = 0
                while i + 1 < n:
                    j = i + 1
                    a = _alpha(Y[l, b, j] - Y[l, b, i], beta)
                    A[l, b, p] = a
                    yi = Y[l, b, i]
                    Y[l + 1, b, i] = (1.0 - a) * yi + a * Y[l, b, j]
                    Y[l + 1, b, j] = a * yi + (1.0 - a) * Y[l, b, j]
                    ri = R[l, b, i]
                    R[l + 1, b, i] = (1.0 - a) * ri + a * R[l, b, j]
                    R[l + 1, b, j] = a * ri + (1.0 - a) * R[l, b, j]
                    i += 2
                    p += 1
            for l in range(L - 1, -1, -1):
                for i in range(n):
                    U[l, b, i] = U[l + 1, b, i]
                i = l % 2
                p = 0
                while i + 1 < n:
                    j = i + 1
                    a = A[l, b, p]
                    ui = U[l + 1, b, i]
                    U[l, b, i] = (1.0 - a) * ui + a * U[l + 1, b, j]
                    U[l, b, j] = a * ui + (1.0 - a) * U[l + 1, b, j]
                    i += 2
                    p += 1

    ctx = (beta, Y_arr, R_arr, U_arr, A_arr)
    return U_arr[0].copy(), R_arr[L].copy(), ctx


def fused_backward(ctx, grad_w, grad_rhat):
    beta_obj, Y_arr, R_arr, U_arr, A_arr = ctx
    cdef double beta = beta_obj
    cdef Py_ssize_t B = Y_arr.shape[1], n = Y_arr.shape[2]
    cdef Py_ssize_t L = n

    gw_arr = (np.zeros((B, n)) if grad_w is None
              else np.ascontiguousarray(grad_w, dtype=np.float64))
    gr_arr = (np.zeros((B, n)) if grad_rhat is None
              else np.ascontiguousarray(grad_rhat, dtype=np.float64))
    gu_arr = np.array(gw_arr, copy=True)
    grho_arr = np.array(gr_arr, copy=True)
    gy_arr = np.zeros((B, n))
    GAU_arr = np.zeros((L, B, n // 2 if n > 1 else 1))

    cdef double[:, :, :] Y = Y_arr
    cdef double[:, :, :] R = R_arr
    cdef double[:, :, :] U = U_arr
    cdef double[:, :, :] A = A_arr
    cdef double[:, :, :] GAU = GAU_arr
    cdef double[:, :] gu = gu_arr
    cdef double[:, :] grho = grho_arr
    cdef double[:, :] gy = gy_arr
    cdef Py_ssize_t b, l, i, j, p
    cdef double a, ga, gi, hp

    with nogil:
        for b in range(B):
            for l in range(L):
                i = l % 2
                p = 0
                while i + 1 < n:
                    j = i + 1
                    a = A[l, b, p]
                    GAU[l, b, p] = (gu[b, i] - gu[b, j]) * (U[l + 1, b, j] - U[l + 1, b, i])
                    gi = gu[b, i]
                    gu[b, i] = (1.0 - a) * gi + a * gu[b, j]
                    gu[b, j] = a * gi + (1.0 - a) * gu[b, j]
                    i += 2
                    p += 1
            for l in range(L - 1, -1, -1):
                i = l % 2
                p = 0
                while i + 1 < n:
                    j = i + 1
                    a = A[l, b, p]
                    ga = GAU[l, b, p]
                    ga = ga + (grho[b, i] - grho[b, j]) * (R[l, b, j] - R[l, b, i])
                    gi = grho[b, i]
                    grho[b, i] = (1.0 - a) * gi + a * grho[b, j]
                    grho[b, j] = a * gi + (1.0 - a) * grho[b, j]
                    ga = ga + (gy[b, i] - gy[b, j]) * (Y[l, b, j] - Y[l, b, i])
                    gi = gy[b, i]
                    gy[b, i] = (1.0 - a) * gi + a * gy[b, j]
                    gy[b, j] = a * gi + (1.0 - a) * gy[b, j]
                    hp = ga * _alpha_grad(Y[l, b, j] - Y[l, b, i], beta)
                    gy[b, j] += hp
                    gy[b, i] -= hp
                    i += 2
                    p += 1
    return gy_arr
