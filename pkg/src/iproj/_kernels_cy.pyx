# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled reduction kernels.

Mirrors _kernels_py operation for operation: same Kahan recurrences, same
ascending index order, same libm calls.  Compiled with -ffp-contract=off
so no multiply-add fusion sneaks in; results are bit-identical to the
pure-Python backend.
"""

from libc.math cimport INFINITY, exp, fabs, log

import numpy as np

BACKEND = "cython"


def kahan_sum(const double[::1] values):
    cdef double s = 0.0, c = 0.0, y, t
    cdef Py_ssize_t k, n = values.shape[0]
    for k in range(n):
        y = values[k] - c
        t = s + y
        c = (t - s) - y
        s = t
    return s


def weighted_sum(const double[::1] f, const double[::1] m):
    cdef double s = 0.0, c = 0.0, y, t, term, fk, mk
    cdef bint saw_neg_inf = 0
    cdef Py_ssize_t k, n = f.shape[0]
    for k in range(n):
        mk = m[k]
        if mk == 0.0:
            continue
        fk = f[k]
        if fk == INFINITY:
            raise OverflowError("+inf integrand on a set of positive mass")
        if fk == -INFINITY:
            saw_neg_inf = 1
            continue
        term = fk * mk
        y = term - c
        t = s + y
        c = (t - s) - y
        s = t
    if saw_neg_inf:
        return -INFINITY
    return s


def kl_sum(const double[::1] p, const double[::1] q):
    cdef double s = 0.0, c = 0.0, y, t, term, pk, qk
    cdef Py_ssize_t k, n = p.shape[0]
    for k in range(n):
        pk = p[k]
        if pk == 0.0:
            continue
        qk = q[k]
        if qk == 0.0:
            return INFINITY
        term = pk * log(pk / qk)
        y = term - c
        t = s + y
        c = (t - s) - y
        s = t
    return s


def logsumexp_weighted(const double[::1] y, const double[::1] m):
    cdef double shift = -INFINITY, s = 0.0, c = 0.0, u, t, term, yk, mk
    cdef bint any_mass = 0
    cdef Py_ssize_t k, n = y.shape[0]
    for k in range(n):
        if m[k] > 0.0:
            any_mass = 1
            yk = y[k]
            if yk == INFINITY:
                raise OverflowError("+inf exponent on a set of positive mass")
            if yk > shift:
                shift = yk
    if not any_mass:
        raise ValueError("measure has no positive mass")
    if shift == -INFINITY:
        return -INFINITY
    for k in range(n):
        mk = m[k]
        if mk == 0.0:
            continue
        term = exp(y[k] - shift) * mk
        u = term - c
        t = s + u
        c = (t - s) - u
        s = t
    return shift + log(s)


def tilted_moments(const double[::1] z, const double[::1] m, double alpha):
    cdef double shift = -INFINITY, e, zk, mk, w, y, t
    cdef double s0 = 0.0, c0 = 0.0, s1 = 0.0, c1 = 0.0, s2 = 0.0, c2 = 0.0
    cdef double phi, dphi, d2phi, term1, term2
    cdef bint any_mass = 0
    cdef Py_ssize_t k, n = z.shape[0]
    for k in range(n):
        if m[k] > 0.0:
            any_mass = 1
            e = alpha * z[k]
            if e > shift:
                shift = e
    if not any_mass:
        raise ValueError("measure has no positive mass")
    for k in range(n):
        mk = m[k]
        if mk == 0.0:
            continue
        zk = z[k]
        w = exp(alpha * zk - shift) * mk
        y = w - c0
        t = s0 + y
        c0 = (t - s0) - y
        s0 = t
        term1 = w * zk
        y = term1 - c1
        t = s1 + y
        c1 = (t - s1) - y
        s1 = t
        term2 = w * zk * zk
        y = term2 - c2
        t = s2 + y
        c2 = (t - s2) - y
        s2 = t
    phi = shift + log(s0)
    dphi = s1 / s0
    d2phi = s2 / s0 - dphi * dphi
    return phi, dphi, d2phi


def abs_diff_sum(const double[::1] a, const double[::1] b):
    cdef double s = 0.0, c = 0.0, y, t, term
    cdef Py_ssize_t k, n = a.shape[0]
    for k in range(n):
        term = fabs(a[k] - b[k])
        y = term - c
        t = s + y
        c = (t - s) - y
        s = t
    return s


def pava(const double[::1] values, const double[::1] weights):
    cdef Py_ssize_t n = values.shape[0]
    bw_arr = np.empty(n, dtype=np.float64)
    bwv_arr = np.empty(n, dtype=np.float64)
    cnt_arr = np.empty(n, dtype=np.intp)
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] bw = bw_arr
    cdef double[::1] bwv = bwv_arr
    cdef Py_ssize_t[::1] cnt = cnt_arr
    cdef double[::1] out = out_arr
    cdef Py_ssize_t top = -1, k, j, pos, r
    cdef double mean
    for k in range(n):
        top += 1
        bw[top] = weights[k]
        bwv[top] = weights[k] * values[k]
        cnt[top] = 1
        while top > 0 and bwv[top - 1] * bw[top] > bwv[top] * bw[top - 1]:
            bw[top - 1] = bw[top - 1] + bw[top]
            bwv[top - 1] = bwv[top - 1] + bwv[top]
            cnt[top - 1] = cnt[top - 1] + cnt[top]
            top -= 1
    pos = 0
    for j in range(top + 1):
        mean = bwv[j] / bw[j]
        for r in range(cnt[j]):
            out[pos] = mean
            pos += 1
    return out_arr
