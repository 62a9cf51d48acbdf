# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Riccati kernels.

Same interface as ``_riccati_py``. The iteration runs without the GIL and
calls BLAS/LAPACK through scipy's Cython bindings. Matrices are handled in
column-major (Fortran) layout internally.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, isfinite
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport dgemm
from scipy.linalg.cython_lapack cimport dpotrf, dpotrs

cnp.import_array()

cdef enum:
    ST_CONVERGED = 0
    ST_DIVERGED = 1
    ST_MAX_ITER = 2

CONVERGED = ST_CONVERGED
DIVERGED = ST_DIVERGED
MAX_ITER = ST_MAX_ITER

cdef double COND_LIMIT = 1e14


class KernelError(ArithmeticError):
    pass


cdef struct Work:
    double* PA
    double* PB
    double* S
    double* G
    double* Z


cdef int _step(int n, int k, double* P, double* A, double* B, double* Q,
               double* R, double* X, Work* w) noexcept nogil:
    """X <- symmetrized Riccati step of P. Returns 0, or -1/-2 on a bad inner matrix."""
    cdef double one = 1.0, zero = 0.0, mone = -1.0
    cdef char tn = b'N'
    cdef char tt = b'T'
    cdef char lo = b'L'
    cdef int info = 0, i, j
    cdef double dmin, dmax, v

    # PA = P A ; X = Q + A' PA
    dgemm(&tn, &tn, &n, &n, &n, &one, P, &n, A, &n, &zero, w.PA, &n)
    memcpy(X, Q, n * n * sizeof(double))
    dgemm(&tt, &tn, &n, &n, &n, &one, A, &n, w.PA, &n, &one, X, &n)
    if k > 0:
        # PB = P B ; S = R + B' PB ; G = PB' A
        dgemm(&tn, &tn, &n, &k, &n, &one, P, &n, B, &n, &zero, w.PB, &n)
        memcpy(w.S, R, k * k * sizeof(double))
        dgemm(&tt, &tn, &k, &k, &n, &one, B, &n, w.PB, &n, &one, w.S, &k)
        dgemm(&tt, &tn, &k, &n, &n, &one, w.PB, &n, A, &n, &zero, w.G, &k)
        dpotrf(&lo, &k, w.S, &k, &info)
        if info != 0:
            return -1
        dmin = w.S[0]
        dmax = w.S[0]
        for i in range(1, k):
            v = w.S[i * k + i]
            if v < dmin:
                dmin = v
            if v > dmax:
                dmax = v
        if dmin <= 0.0 or (dmax / dmin) * (dmax / dmin) > COND_LIMIT:
            return -2
        memcpy(w.Z, w.G, k * n * sizeof(double))
        dpotrs(&lo, &k, &n, w.S, &k, w.Z, &k, &info)
        if info != 0:
            return -1
        # X -= G' Z
        dgemm(&tt, &tn, &n, &n, &k, &mone, w.G, &k, w.Z, &k, &one, X, &n)
    for j in range(n):
        for i in range(j + 1, n):
            v = 0.5 * (X[j * n + i] + X[i * n + j])
            X[j * n + i] = v
            X[i * n + j] = v
    return 0


cdef double _fro(int n, double* X) noexcept nogil:
    cdef double s = 0.0
    cdef int i
    for i in range(n * n):
        s += X[i] * X[i]
    return sqrt(s)


cdef double _fro_diff(int n, double* X, double* Y) noexcept nogil:
    cdef double s = 0.0, d
    cdef int i
    for i in range(n * n):
        d = X[i] - Y[i]
        s += d * d
    return sqrt(s)


cdef void _bind(Work* w, double* buf, int n, int k) noexcept:
    cdef int km = k if k > 0 else 1
    w.PA = buf
    w.PB = w.PA + n * n
    w.S = w.PB + n * km
    w.G = w.S + km * km
    w.Z = w.G + km * n


def _work_size(n, k):
    km = max(k, 1)
    return n * n + 3 * n * km + km * km


def _prep(P, A, B, Q, R):
    A = np.asfortranarray(A, dtype=np.float64)
    n = A.shape[0]
    B = np.asfortranarray(B, dtype=np.float64)
    if B.ndim != 2:
        B = B.reshape((n, -1), order="F")
    k = B.shape[1]
    Q = np.asfortranarray(Q, dtype=np.float64)
    R = np.asfortranarray(R, dtype=np.float64).reshape((k, k), order="F")
    P = np.asfortranarray(P, dtype=np.float64) if P is not None else None
    return P, A, B, Q, R, n, k


def _raise(int code):
    if code == -1:
        raise KernelError("R + B'PB is not positive definite")
    raise KernelError("R + B'PB is numerically singular")


def riccati_step(P, A, B, Q, R):
    """One backward Riccati step, symmetrized."""
    P, A, B, Q, R, n, k = _prep(P, A, B, Q, R)
    cdef int ni = n, ki = k, code
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="fortran"] Pa = P, Aa = A, Qa = Q
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="fortran"] X = np.empty((n, n), order="F")
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="fortran"] Ba = B if k else np.zeros((n, 1), order="F")
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="fortran"] Ra = R if k else np.ones((1, 1), order="F")
    cdef cnp.ndarray[cnp.float64_t, ndim=1] buf = np.empty(_work_size(n, k))
    cdef Work w
    _bind(&w, &buf[0], ni, ki)
    with nogil:
        code = _step(ni, ki, &Pa[0, 0], &Aa[0, 0], &Ba[0, 0], &Qa[0, 0], &Ra[0, 0], &X[0, 0], &w)
    if code:
        _raise(code)
    return np.ascontiguousarray(X)


def dare_iterate(A, B, Q, R, double tol, int max_iter, double divergence_threshold):
    """Fixed-point iteration from P = Q.

    Returns ``(P, iterations, status)``.
    """
    _, A, B, Q, R, n, k = _prep(None, A, B, Q, R)
    cdef int ni = n, ki = k, code = 0, it = 0, status = ST_MAX_ITER
    cdef double norm_p, norm_n, diff
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="fortran"] Aa = A, Qa = Q
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="fortran"] Pcur = np.array(Q, order="F", copy=True)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="fortran"] Pnext = np.empty((n, n), order="F")
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="fortran"] Ba = B if k else np.zeros((n, 1), order="F")
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="fortran"] Ra = R if k else np.ones((1, 1), order="F")
    cdef cnp.ndarray[cnp.float64_t, ndim=1] buf = np.empty(_work_size(n, k))
    cdef Work w
    cdef double* cur
    cdef double* nxt
    cdef double* tmp
    _bind(&w, &buf[0], ni, ki)
    cur = &Pcur[0, 0]
    nxt = &Pnext[0, 0]
    with nogil:
        norm_p = _fro(ni, cur)
        it = 0
        while it < max_iter:
            it += 1
            code = _step(ni, ki, cur, &Aa[0, 0], &Ba[0, 0], &Qa[0, 0], &Ra[0, 0], nxt, &w)
            if code:
                break
            norm_n = _fro(ni, nxt)
            if not isfinite(norm_n) or norm_n > divergence_threshold:
                status = ST_DIVERGED
                tmp = cur; cur = nxt; nxt = tmp
                break
            diff = _fro_diff(ni, nxt, cur)
            tmp = cur; cur = nxt; nxt = tmp
            if diff / (norm_p if norm_p > 1.0 else 1.0) <= tol:
                status = ST_CONVERGED
                break
            norm_p = norm_n
    if code:
        _raise(code)
    if cur == &Pcur[0, 0]:
        return np.ascontiguousarray(Pcur), it, status
    return np.ascontiguousarray(Pnext), it, status
