# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: canonical fixed-point loop and batched log-determinants.

Both entry points mirror :mod:`mimocap._pycore` exactly in signature and
return layout; :mod:`mimocap.kernels` picks one at import time.
"""

import numpy as np

from libc.math cimport log, sqrt, fabs, isfinite, NAN

ctypedef double complex cplx


cdef inline double _abs2(cplx z) noexcept nogil:
    return z.real * z.real + z.imag * z.imag


cdef inline cplx _conj(cplx z) noexcept nogil:
    return z.real - 1j * z.imag


cdef int _cholesky(cplx[:, ::1] a, Py_ssize_t n) noexcept nogil:
    """In-place lower Cholesky factor of a Hermitian matrix; -1 if not PD."""
    cdef Py_ssize_t i, j, k
    cdef double d
    cdef cplx s
    for j in range(n):
        d = a[j, j].real
        for k in range(j):
            d -= _abs2(a[j, k])
        if not (d > 0.0):
            return -1
        d = sqrt(d)
        a[j, j] = d
        for i in range(j + 1, n):
            s = a[i, j]
            for k in range(j):
                s = s - a[i, k] * _conj(a[j, k])
            a[i, j] = s / d
    return 0


cdef int _hermitian_inverse(cplx[:, ::1] a, cplx[:, ::1] x, cplx[:, ::1] out,
                            Py_ssize_t n) noexcept nogil:
    """out <- a^{-1} for Hermitian PD ``a`` (``a`` and ``x`` are clobbered)."""
    cdef Py_ssize_t i, j, k, k0
    cdef cplx s
    if _cholesky(a, n) != 0:
        return -1
    # x <- L^{-1}, lower triangular
    for j in range(n):
        for i in range(n):
            x[i, j] = 0.0
        x[j, j] = 1.0 / a[j, j].real
        for i in range(j + 1, n):
            s = 0.0
            for k in range(j, i):
                s = s + a[i, k] * x[k, j]
            x[i, j] = -s / a[i, i].real
    # a^{-1} = L^{-H} L^{-1}
    for i in range(n):
        for j in range(i, n):
            s = 0.0
            k0 = j
            for k in range(k0, n):
                s = s + _conj(x[k, i]) * x[k, j]
            out[i, j] = s
            out[j, i] = _conj(s)
    return 0


cdef void _trace_products(const cplx[:, :, ::1] c, cplx[:, ::1] inv,
                          Py_ssize_t nmat, Py_ssize_t n, double scale,
                          double[::1] res) noexcept nogil:
    """res[l] <- scale * Re Tr(c[l] @ inv)."""
    cdef Py_ssize_t l, i, j
    cdef double acc
    for l in range(nmat):
        acc = 0.0
        for i in range(n):
            for j in range(n):
                acc += (c[l, i, j] * inv[j, i]).real
        res[l] = scale * acc


cdef int _f_map(const cplx[:, :, ::1] c, double[::1] weights, Py_ssize_t nmat,
                Py_ssize_t n, double sigma2, double inv_t,
                cplx[:, ::1] a, cplx[:, ::1] x, cplx[:, ::1] inv,
                double[::1] res) noexcept nogil:
    """res[l] <- (1/t) Tr(c[l] [sigma2 (I + sum_j w_j c[j])]^{-1})."""
    cdef Py_ssize_t l, i, j
    cdef double w
    for i in range(n):
        for j in range(n):
            a[i, j] = 1.0 if i == j else 0.0
    for l in range(nmat):
        w = weights[l]
        if w == 0.0:
            continue
        for i in range(n):
            for j in range(n):
                a[i, j] = a[i, j] + w * c[l, i, j]
    if _hermitian_inverse(a, x, inv, n) != 0:
        return -1
    _trace_products(c, inv, nmat, n, inv_t / sigma2, res)
    return 0


def fixed_point(const cplx[:, :, ::1] cr, const cplx[:, :, ::1] cq,
                double sigma2, delta0, delta_tilde0, double tol, long max_iter,
                int t):
    """Jacobi iteration of the canonical system.

    Parameters
    ----------
    cr : (L, r, r) complex
        Receive correlation matrices.
    cq : (L, t, t) complex
        Transmit correlations congruence-transformed by ``Q^{1/2}``.
    sigma2, tol, max_iter, t
        Noise power, sup-norm step tolerance, iteration cap, transmit count.

    Returns
    -------
    delta, delta_tilde, n_iter, steps, status
        ``status`` is 0 converged, 1 iteration cap, 2 non-finite iterate,
        3 singular resolvent.
    """
    cdef Py_ssize_t L = cr.shape[0], r = cr.shape[1], tt = cq.shape[1]
    cdef Py_ssize_t m = r if r > tt else tt
    cdef double[::1] d = np.array(delta0, dtype=np.float64, copy=True)
    cdef double[::1] dt = np.array(delta_tilde0, dtype=np.float64, copy=True)
    cdef double[::1] dn = np.empty(L)
    cdef double[::1] dtn = np.empty(L)
    steps_arr = np.empty(max_iter, dtype=np.float64)
    cdef double[::1] steps = steps_arr
    cdef cplx[:, ::1] a = np.empty((m, m), dtype=np.complex128)
    cdef cplx[:, ::1] x = np.empty((m, m), dtype=np.complex128)
    cdef cplx[:, ::1] inv = np.empty((m, m), dtype=np.complex128)
    cdef double inv_t = 1.0 / t
    cdef double step, diff
    cdef long it = 0
    cdef Py_ssize_t l
    cdef int status = 1
    with nogil:
        while it < max_iter:
            if _f_map(cr, dt, L, r, sigma2, inv_t, a, x, inv, dn) != 0:
                status = 3
                break
            if _f_map(cq, d, L, tt, sigma2, inv_t, a, x, inv, dtn) != 0:
                status = 3
                break
            step = 0.0
            for l in range(L):
                if not (isfinite(dn[l]) and isfinite(dtn[l])):
                    status = 2
                diff = fabs(dn[l] - d[l])
                if diff > step:
                    step = diff
                diff = fabs(dtn[l] - dt[l])
                if diff > step:
                    step = diff
                d[l] = dn[l]
                dt[l] = dtn[l]
            steps[it] = step
            it += 1
            if status == 2:
                break
            if step <= tol:
                status = 0
                break
    return np.asarray(d), np.asarray(dt), int(it), steps_arr[:it].copy(), status


def batch_logdet(const cplx[:, :, ::1] h, const cplx[:, ::1] q, double inv_sigma2):
    """log|I + inv_sigma2 * H_i Q H_i^H| for each H_i in the stack ``h``."""
    cdef Py_ssize_t n = h.shape[0], r = h.shape[1], t = h.shape[2]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef cplx[:, ::1] hq = np.empty((r, t), dtype=np.complex128)
    cdef cplx[:, ::1] a = np.empty((r, r), dtype=np.complex128)
    cdef Py_ssize_t s, i, j, k
    cdef cplx acc
    cdef double ld
    with nogil:
        for s in range(n):
            for i in range(r):
                for j in range(t):
                    acc = 0.0
                    for k in range(t):
                        acc = acc + h[s, i, k] * q[k, j]
                    hq[i, j] = acc
            for i in range(r):
                for j in range(i + 1):
                    acc = 0.0
                    for k in range(t):
                        acc = acc + hq[i, k] * _conj(h[s, j, k])
                    acc = acc * inv_sigma2
                    if i == j:
                        a[i, i] = 1.0 + acc.real
                    else:
                        a[i, j] = acc
                        a[j, i] = _conj(acc)
            if _cholesky(a, r) != 0:
                out[s] = NAN
                continue
            ld = 0.0
            for i in range(r):
                ld += log(a[i, i].real)
            out[s] = 2.0 * ld
    return out_arr
