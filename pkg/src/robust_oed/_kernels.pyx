# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled batch kernels; same contract as ``_kernels_py``.

The information matrices of a chunk of scenarios are accumulated with one
BLAS product against the row outer products; each matrix is then checked
with cyclic Jacobi rotations (extreme eigenvalues), and a Cholesky factor
gives the log-determinant and the inverse, all in C.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, fabs, NAN
from libc.stdlib cimport malloc, free

cnp.import_array()

DEF CHUNK = 8192


cdef bint _well_posed(const double* M, double* work, int p, double eps_rank) noexcept nogil:
    """Cyclic Jacobi on a copy of M; compares extreme eigenvalues."""
    cdef int a, b, k, sweep
    cdef double off, frob, app, aqq, apq, theta, t, c, s, x, y, lmin, lmax
    frob = 0.0
    for a in range(p * p):
        work[a] = M[a]
        frob += M[a] * M[a]
    if frob == 0.0:
        return False
    for sweep in range(60):
        off = 0.0
        for a in range(p):
            for b in range(a + 1, p):
                off += work[a * p + b] * work[a * p + b]
        if off <= 1e-30 * frob:
            break
        for a in range(p):
            for b in range(a + 1, p):
                apq = work[a * p + b]
                if apq == 0.0:
                    continue
                app = work[a * p + a]
                aqq = work[b * p + b]
                theta = (aqq - app) / (2.0 * apq)
                t = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                for k in range(p):
                    x = work[k * p + a]
                    y = work[k * p + b]
                    work[k * p + a] = c * x - s * y
                    work[k * p + b] = s * x + c * y
                for k in range(p):
                    x = work[a * p + k]
                    y = work[b * p + k]
                    work[a * p + k] = c * x - s * y
                    work[b * p + k] = s * x + c * y
    lmin = work[0]
    lmax = work[0]
    for a in range(1, p):
        x = work[a * p + a]
        if x < lmin:
            lmin = x
        if x > lmax:
            lmax = x
    return lmax > 0.0 and lmin > eps_rank * lmax


cdef bint _cholesky(double* M, int p) noexcept nogil:
    """In-place lower Cholesky factor (row-major); False if not PD."""
    cdef int a, b, k
    cdef double acc
    for a in range(p):
        for b in range(a + 1):
            acc = M[a * p + b]
            for k in range(b):
                acc -= M[a * p + k] * M[b * p + k]
            if a == b:
                if acc <= 0.0:
                    return False
                M[a * p + a] = sqrt(acc)
            else:
                M[a * p + b] = acc / M[b * p + b]
    return True


cdef void _factor(const double[:, ::1] Mc, Py_ssize_t r, Py_ssize_t j, int p, double eps_rank,
                  bint want_inv, double* M, double* work, double[::1] logdet, unsigned char[::1] ok,
                  double[:, :, ::1] inv) noexcept nogil:
    cdef int a, b, k
    cdef double acc, ld
    for a in range(p * p):
        M[a] = Mc[r, a]
    if not _well_posed(M, work, p, eps_rank):
        return
    if not _cholesky(M, p):
        return
    ok[j] = 1
    ld = 0.0
    for a in range(p):
        ld += log(M[a * p + a])
    logdet[j] = 2.0 * ld
    if not want_inv:
        return
    # work <- L^-1 (lower triangular)
    for a in range(p * p):
        work[a] = 0.0
    for b in range(p):
        work[b * p + b] = 1.0 / M[b * p + b]
        for a in range(b + 1, p):
            acc = 0.0
            for k in range(b, a):
                acc -= M[a * p + k] * work[k * p + b]
            work[a * p + b] = acc / M[a * p + a]
    # M^-1 = L^-T L^-1
    for a in range(p):
        for b in range(a + 1):
            acc = 0.0
            for k in range(a, p):
                acc += work[k * p + a] * work[k * p + b]
            inv[j, a, b] = acc
            inv[j, b, a] = acc


def factor_batch(T, w, S, double eps_rank, bint want_inv=False):
    """``(logdet, ok, inv)``; ``inv`` is None unless ``want_inv``."""
    T = np.ascontiguousarray(T, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    S = np.ascontiguousarray(S, dtype=np.float64)
    cdef Py_ssize_t n_s = S.shape[0], n_y = T.shape[0], j, start, stop
    cdef int p = <int>T.shape[1]
    outer = (T[:, :, None] * T[:, None, :]).reshape(n_y, p * p)
    logdet_arr = np.full(n_s, np.nan)
    ok_arr = np.zeros(n_s, dtype=np.uint8)
    inv_arr = np.full((n_s if want_inv else 0, p, p), np.nan)
    cdef double[::1] logdet = logdet_arr
    cdef unsigned char[::1] ok = ok_arr
    cdef double[:, :, ::1] inv = inv_arr
    cdef const double[:, ::1] Mc
    cdef double* M = <double*>malloc(p * p * sizeof(double))
    cdef double* work = <double*>malloc(p * p * sizeof(double))
    if M == NULL or work == NULL:
        free(M); free(work)
        raise MemoryError()
    try:
        for start in range(0, n_s, CHUNK):
            stop = min(start + CHUNK, n_s)
            Mc = np.ascontiguousarray((S[start:stop] * w) @ outer)
            with nogil:
                for j in range(start, stop):
                    _factor(Mc, j - start, j, p, eps_rank, want_inv, M, work, logdet, ok, inv)
    finally:
        free(M); free(work)
    return logdet_arr, ok_arr.astype(bool), (inv_arr if want_inv else None)
