# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: QR Lyapunov sums along an index path, and Markov chain sampling."""

import numpy as np

from libc.math cimport log, sqrt

ctypedef fused scalar:
    double
    double complex


cdef inline double _sqabs(scalar z) noexcept nogil:
    if scalar is double:
        return z * z
    else:
        return z.real * z.real + z.imag * z.imag


cdef inline scalar _conj(scalar z) noexcept nogil:
    if scalar is double:
        return z
    else:
        return z.real - 1j * z.imag


cdef Py_ssize_t _qr_run(const scalar[:, :, ::1] mats, const Py_ssize_t[::1] idx, Py_ssize_t every,
                        double[::1] sums, double[:, ::1] trace,
                        scalar[:, ::1] Q, scalar[:, ::1] W) noexcept nogil:
    cdef Py_ssize_t d = mats.shape[1]
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t t, i, j, l, k, rep
    cdef scalar acc, c
    cdef double nrm
    for t in range(n):
        k = idx[t]
        if k < 0:
            return t
        for i in range(d):
            for j in range(d):
                acc = 0
                for l in range(d):
                    acc = acc + mats[k, i, l] * Q[l, j]
                W[i, j] = acc
        # modified Gram-Schmidt, two passes
        for j in range(d):
            for rep in range(2):
                for l in range(j):
                    c = 0
                    for i in range(d):
                        c = c + _conj(Q[i, l]) * W[i, j]
                    for i in range(d):
                        W[i, j] = W[i, j] - c * Q[i, l]
            nrm = 0.0
            for i in range(d):
                nrm += _sqabs(W[i, j])
            nrm = sqrt(nrm)
            sums[j] += log(nrm)
            for i in range(d):
                Q[i, j] = W[i, j] / nrm
        if every > 0 and (t + 1) % every == 0:
            for j in range(d):
                trace[(t + 1) // every - 1, j] = sums[j]
    return n


def qr_run(mats, idx, Py_ssize_t every=0):
    """Sum of ``log |r_jj|`` over the QR steps ``A[idx[0]]``, ``A[idx[1]]``, ...

    Stops at the first negative index. Returns ``(sums, trace, steps)`` where
    ``trace[c]`` holds the sums after ``(c + 1) * every`` steps.
    """
    cdef const Py_ssize_t[::1] ix = np.ascontiguousarray(idx, dtype=np.intp)
    cdef Py_ssize_t n = ix.shape[0]
    cdef Py_ssize_t d = mats.shape[1]
    sums = np.zeros(d)
    trace = np.zeros((n // every if every > 0 else 0, d))
    cdef double[::1] s = sums
    cdef double[:, ::1] tr = trace
    cdef Py_ssize_t steps
    cdef const double complex[:, :, ::1] mc
    cdef const double[:, :, ::1] mr
    cdef double complex[:, ::1] Qc, Wc
    cdef double[:, ::1] Qr, Wr
    if np.iscomplexobj(mats):
        mc = np.ascontiguousarray(mats, dtype=np.complex128)
        Qc = np.eye(d, dtype=np.complex128)
        Wc = np.empty((d, d), dtype=np.complex128)
        with nogil:
            steps = _qr_run(mc, ix, every, s, tr, Qc, Wc)
    else:
        mr = np.ascontiguousarray(mats, dtype=np.float64)
        Qr = np.eye(d)
        Wr = np.empty((d, d))
        with nogil:
            steps = _qr_run(mr, ix, every, s, tr, Qr, Wr)
    return sums, trace, steps


def sample_markov(cum, Py_ssize_t start, u, out):
    """Fill ``out`` with a chain from ``start``: ``out[t]`` is the first ``j`` with ``u[t] < cum[out[t-1], j]``."""
    cdef const double[:, ::1] c = np.ascontiguousarray(cum, dtype=np.float64)
    cdef const double[::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t[::1] o = out
    cdef Py_ssize_t n = o.shape[0]
    cdef Py_ssize_t k = c.shape[1]
    cdef Py_ssize_t t, j, row
    with nogil:
        if n > 0:
            o[0] = start
        for t in range(1, n):
            row = o[t - 1]
            j = 0
            while j < k - 1 and uu[t] >= c[row, j]:
                j += 1
            o[t] = j
    return out
