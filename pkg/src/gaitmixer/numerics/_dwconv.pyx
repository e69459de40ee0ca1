# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: depthwise 1-d convolution (valid cross-correlation) and GELU.

Inputs are already padded: xp is [N, C, T + K - 1], w is [C, K].
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def dwconv_forward(const double[:, :, ::1] xp, const double[:, ::1] w):
    cdef Py_ssize_t N = xp.shape[0], C = xp.shape[1], Tp = xp.shape[2]
    cdef Py_ssize_t K = w.shape[1]
    cdef Py_ssize_t T = Tp - K + 1
    out_arr = np.zeros((N, C, T), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t n, c, t, k
    cdef double acc
    with nogil:
        for n in range(N):
            for c in range(C):
                for t in range(T):
                    acc = 0.0
                    for k in range(K):
                        acc = acc + xp[n, c, t + k] * w[c, k]
                    out[n, c, t] = acc
    return out_arr


def dwconv_backward(const double[:, :, ::1] g, const double[:, :, ::1] xp,
                    const double[:, ::1] w):
    cdef Py_ssize_t N = xp.shape[0], C = xp.shape[1], Tp = xp.shape[2]
    cdef Py_ssize_t K = w.shape[1]
    cdef Py_ssize_t T = Tp - K + 1
    dxp_arr = np.zeros((N, C, Tp), dtype=np.float64)
    dw_arr = np.zeros((C, K), dtype=np.float64)
    cdef double[:, :, ::1] dxp = dxp_arr
    cdef double[:, ::1] dw = dw_arr
    cdef Py_ssize_t n, c, t, k
    cdef double gv, acc
    with nogil:
        for n in range(N):
            for c in range(C):
                for t in range(T):
                    gv = g[n, c, t]
                    for k in range(K):
                        dxp[n, c, t + k] += gv * w[c, k]
                for k in range(K):
                    acc = 0.0
                    for t in range(T):
                        acc = acc + g[n, c, t] * xp[n, c, t + k]
                    dw[c, k] += acc
    return dxp_arr, dw_arr


cdef extern from "math.h" nogil:
    double exp(double)


def gelu_forward(x, bint need_deriv=True):
    """tanh-approximate GELU; one pass producing output and derivative."""
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t n = xv.shape[0], i
    out_arr = np.empty(n, dtype=np.float64)
    deriv_arr = np.empty(n if need_deriv else 0, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double[::1] der = deriv_arr
    cdef double c = 0.7978845608028654, a = 0.044715
    cdef double v, v2, th
    with nogil:
        for i in range(n):
            v = xv[i]
            v2 = v * v
            # tanh(u) = 1 - 2 / (exp(2u) + 1); saturates cleanly at +-1
            th = 1.0 - 2.0 / (exp(2.0 * c * v * (1.0 + a * v2)) + 1.0)
            out[i] = 0.5 * v * (1.0 + th)
            if need_deriv:
                der[i] = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * c * (1.0 + 3.0 * a * v2)
    shape = np.shape(x)
    return out_arr.reshape(shape), (deriv_arr.reshape(shape) if need_deriv else None)
