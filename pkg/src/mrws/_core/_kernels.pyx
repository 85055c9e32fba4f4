# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled edge kernels: sign-preserving powers, gathers and row scatters.

Mirrors the contract of ``mrws._core._ref``; selected at import when built.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, pow

cnp.import_array()

_EMPTY = np.empty(0, dtype=np.float64)


cdef inline double _spow(double v, double q) nogil:
    if v > 0.0:
        return pow(v, q)
    elif v < 0.0:
        return -pow(-v, q)
    return 0.0


# fast paths for the common exponents: q = 1, 2, 3 (p = 2, 3, 4)
cdef inline double _spow1(double v) nogil:
    return v


cdef inline double _spow2(double v) nogil:
    return fabs(v) * v


cdef inline double _spow3(double v) nogil:
    return v * v * v


def signed_pow(r, double q):
    cdef const double[::1] rv = np.ascontiguousarray(r, dtype=np.float64)
    cdef Py_ssize_t i, n = rv.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    with nogil:
        if q == 1.0:
            for i in range(n):
                ov[i] = _spow1(rv[i])
        elif q == 2.0:
            for i in range(n):
                ov[i] = _spow2(rv[i])
        elif q == 3.0:
            for i in range(n):
                ov[i] = _spow3(rv[i])
        else:
            for i in range(n):
                ov[i] = _spow(rv[i], q)
    return out


def signed_pow_deriv(r, double q, double delta):
    cdef const double[::1] rv = np.ascontiguousarray(r, dtype=np.float64)
    cdef Py_ssize_t i, n = rv.shape[0]
    cdef double d2 = delta * delta
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    with nogil:
        for i in range(n):
            ov[i] = q * pow(rv[i] * rv[i] + d2, 0.5 * (q - 1.0))
    return out


def gather_diff(u, src, dst):
    cdef const double[::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef const long long[::1] sv = np.ascontiguousarray(src, dtype=np.int64)
    cdef const long long[::1] dv = np.ascontiguousarray(dst, dtype=np.int64)
    cdef Py_ssize_t i, n = sv.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    with nogil:
        for i in range(n):
            ov[i] = uv[dv[i]] - uv[sv[i]]
    return out


def scatter_sum(vals, idx, Py_ssize_t size):
    cdef const double[::1] vv = np.ascontiguousarray(vals, dtype=np.float64)
    cdef const long long[::1] iv = np.ascontiguousarray(idx, dtype=np.int64)
    cdef Py_ssize_t i, n = iv.shape[0]
    out = np.zeros(size, dtype=np.float64)
    cdef double[::1] ov = out
    with nogil:
        for i in range(n):
            ov[iv[i]] += vv[i]
    return out


ctypedef double (*_spow_t)(double, double) noexcept nogil


cdef double _w1(double v, double q) noexcept nogil:
    return v


cdef double _w2(double v, double q) noexcept nogil:
    return fabs(v) * v


cdef double _w3(double v, double q) noexcept nogil:
    return v * v * v


cdef double _wgen(double v, double q) noexcept nogil:
    return _spow(v, q)


cdef _spow_t _dispatch(double q) noexcept nogil:
    if q == 1.0:
        return _w1
    if q == 2.0:
        return _w2
    if q == 3.0:
        return _w3
    return _wgen


def plap_row_sums(u, src, dst, w, factor, double pm1, Py_ssize_t size):
    cdef const double[::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef const long long[::1] sv = np.ascontiguousarray(src, dtype=np.int64)
    cdef const long long[::1] dv = np.ascontiguousarray(dst, dtype=np.int64)
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t i, n = sv.shape[0]
    cdef double val
    cdef bint has_factor = factor is not None
    cdef const double[::1] fv = _EMPTY
    if has_factor:
        fv = np.ascontiguousarray(factor, dtype=np.float64)
    out = np.zeros(size, dtype=np.float64)
    cdef double[::1] ov = out
    cdef _spow_t f = _dispatch(pm1)
    if has_factor:
        with nogil:
            for i in range(n):
                val = f(uv[dv[i]] - uv[sv[i]], pm1) * wv[i] * fv[i]
                ov[sv[i]] += val
    else:
        with nogil:
            for i in range(n):
                val = f(uv[dv[i]] - uv[sv[i]], pm1) * wv[i]
                ov[sv[i]] += val
    return out
