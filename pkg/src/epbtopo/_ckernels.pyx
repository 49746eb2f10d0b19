# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``_pykernels`` for the reference semantics."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"

cdef extern from "complex.h" nogil:
    double complex csqrt(double complex)
    double cabs(double complex)
    double carg(double complex)
    double creal(double complex)
    double cimag(double complex)

cdef extern from "math.h" nogil:
    double log(double)
    double INFINITY


cdef inline double _norm2(double complex x, double complex y) nogil:
    return (creal(x) * creal(x) + cimag(x) * cimag(x)
            + creal(y) * creal(y) + cimag(y) * cimag(y))


def eig2(h, g):
    cdef double complex[::1] hv = np.ascontiguousarray(h, dtype=np.complex128)
    cdef double complex[::1] gv = np.ascontiguousarray(g, dtype=np.complex128)
    cdef Py_ssize_t n = hv.shape[0]
    mu_arr = np.empty((n, 2), dtype=np.complex128)
    vec_arr = np.empty((n, 2, 2), dtype=np.complex128)
    rig_arr = np.empty((n, 2), dtype=np.float64)
    cdef double complex[:, ::1] mu = mu_arr
    cdef double complex[:, :, ::1] vec = vec_arr
    cdef double[:, ::1] rig = rig_arr
    cdef Py_ssize_t i
    cdef int k
    cdef double complex hh, gg, s, m, x1, y1, x2, y2, x, y, pivot
    cdef double n1, n2, nrm, ax, ay
    with nogil:
        for i in range(n):
            hh = hv[i]
            gg = gv[i]
            s = csqrt(hh * hh + gg * gg)
            for k in range(2):
                m = gg + s if k == 0 else gg - s
                mu[i, k] = m
                x1 = hh
                y1 = m
                x2 = m - 2.0 * gg
                y2 = hh
                n1 = _norm2(x1, y1)
                n2 = _norm2(x2, y2)
                if n1 >= n2:
                    x = x1
                    y = y1
                    nrm = n1 ** 0.5
                else:
                    x = x2
                    y = y2
                    nrm = n2 ** 0.5
                x = x / nrm
                y = y / nrm
                ax = cabs(x)
                ay = cabs(y)
                pivot = x if ax >= ay else y
                pivot = cabs(pivot) / pivot
                x = x * pivot
                y = y * pivot
                vec[i, k, 0] = x
                vec[i, k, 1] = y
                rig[i, k] = cabs(x * x + y * y)
    return mu_arr, vec_arr, rig_arr


cdef inline double complex _dot(double complex[:, :, ::1] a, Py_ssize_t i, Py_ssize_t p,
                                double complex[:, :, ::1] b, Py_ssize_t j, Py_ssize_t q) nogil:
    return a[i, p, 0] * b[j, q, 0] + a[i, p, 1] * b[j, q, 1]


def associate(left, right, double threshold, double max_ratio):
    cdef double complex[:, :, ::1] lv = np.ascontiguousarray(left, dtype=np.complex128)
    cdef double complex[:, :, ::1] rv = np.ascontiguousarray(right, dtype=np.complex128)
    cdef Py_ssize_t n = lv.shape[0]
    labels_arr = np.zeros((n + 1, 2), dtype=np.int64)
    cdef long long[:, ::1] labels = labels_arr
    cdef Py_ssize_t l, nxt, a, b
    cdef double m00, m01, m10, m11, ov, keep, swap, ratio
    cdef double min_ov = INFINITY
    cdef double worst = 0.0
    cdef Py_ssize_t first_bad = -1
    labels[0, 0] = 0
    labels[0, 1] = 1
    with nogil:
        for l in range(n):
            nxt = l + 1
            if nxt == n:
                nxt = 0
            a = labels[l, 0]
            b = labels[l, 1]
            m00 = cabs(_dot(lv, l, a, rv, nxt, 0))
            m01 = cabs(_dot(lv, l, a, rv, nxt, 1))
            m10 = cabs(_dot(lv, l, b, rv, nxt, 0))
            m11 = cabs(_dot(lv, l, b, rv, nxt, 1))
            keep = m00 * m11
            swap = m01 * m10
            if keep >= swap:
                labels[l + 1, 0] = 0
                labels[l + 1, 1] = 1
                ov = m00 if m00 < m11 else m11
                ratio = swap / keep if keep > 0 else INFINITY
            else:
                labels[l + 1, 0] = 1
                labels[l + 1, 1] = 0
                ov = m01 if m01 < m10 else m10
                ratio = keep / swap
            if ov < min_ov:
                min_ov = ov
            if ratio > worst:
                worst = ratio
            if (ov <= threshold or ratio >= max_ratio) and first_bad < 0:
                first_bad = l
    return labels_arr, float(min_ov), float(worst), int(first_bad)


def gauge_fix(left, right, double floor):
    left_arr = np.array(left, dtype=np.complex128, order="C", copy=True)
    right_arr = np.array(right, dtype=np.complex128, order="C", copy=True)
    cdef double complex[:, ::1] lv = left_arr
    cdef double complex[:, ::1] rv = right_arr
    cdef Py_ssize_t m = lv.shape[0]
    cdef Py_ssize_t l
    cdef Py_ssize_t first_bad = -1
    cdef double complex ov, phase
    cdef double mag
    with nogil:
        for l in range(m - 1):
            ov = lv[l, 0] * rv[l + 1, 0] + lv[l, 1] * rv[l + 1, 1]
            mag = cabs(ov)
            if mag < floor:
                first_bad = l
                break
            phase = ov / mag
            rv[l + 1, 0] = rv[l + 1, 0] / phase
            rv[l + 1, 1] = rv[l + 1, 1] / phase
            lv[l + 1, 0] = lv[l + 1, 0] * phase
            lv[l + 1, 1] = lv[l + 1, 1] * phase
    return left_arr, right_arr, int(first_bad)


def wilson_running(left, right_next, double floor):
    cdef double complex[:, ::1] lv = np.ascontiguousarray(left, dtype=np.complex128)
    cdef double complex[:, ::1] rv = np.ascontiguousarray(right_next, dtype=np.complex128)
    cdef Py_ssize_t m = lv.shape[0]
    out_arr = np.zeros(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t l
    cdef double complex ov, prod = 1.0
    cdef double mag, logmod = 0.0
    for l in range(m):
        ov = lv[l, 0] * rv[l, 0] + lv[l, 1] * rv[l, 1]
        mag = cabs(ov)
        if mag < floor:
            return np.zeros(m), -np.inf, int(l)
        logmod += log(mag)
        prod = prod * (ov / mag)
        prod = prod / cabs(prod)
        out[l] = -carg(prod)
    return out_arr, logmod, -1


def spectrum_amplitude(double omega0, double gamma0, double kappa0,
                       double xi_r, double xi_i, double zeta_sq, freqs):
    cdef double[::1] f = np.ascontiguousarray(freqs, dtype=np.float64)
    cdef Py_ssize_t nf = f.shape[0]
    out_arr = np.empty((2, nf), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double complex a = omega0 - 1j * gamma0
    cdef double complex b = a - 2j * kappa0 * (1.0 + xi_r + 1j * xi_i)
    cdef double t = -kappa0 * (1.0 - zeta_sq)
    cdef double complex da, db, det
    cdef Py_ssize_t k
    with nogil:
        for k in range(nf):
            da = f[k] - a
            db = f[k] - b
            det = da * db - t * t
            out[0, k] = cabs(db / det)
            out[1, k] = cabs(t / det)
    return out_arr
