# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled propagation kernels.

Both routines apply a truncated Taylor series of a matrix exponential to a
vector or a density matrix, with substepping so that each substep has
``norm * h <= THETA``. Index arrays must be ``intc``, data ``complex128``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, ceil

ctypedef double complex cplx

cdef double THETA = 3.0

cdef inline double cabs1(cplx z) nogil:
    return fabs(z.real) + fabs(z.imag)


cdef void _csr_matvec(const cplx[::1] data, const int[::1] indices, const int[::1] indptr,
                      cplx[::1] x, cplx[::1] y, cplx alpha) noexcept nogil:
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, k
    cdef cplx s
    for i in range(n):
        s = 0
        for k in range(indptr[i], indptr[i + 1]):
            s = s + data[k] * x[indices[k]]
        y[i] = alpha * s


def expmv_taylor(const cplx[::1] data, const int[::1] indices, const int[::1] indptr,
                 psi, double tau, double norm_bound, double tol=1e-15, int max_terms=80):
    """Return ``exp(-1j * tau * H) @ psi`` for a CSR matrix ``H``."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    acc_arr = np.array(psi, dtype=np.complex128, copy=True)
    term_arr = np.empty(n, dtype=np.complex128)
    tmp_arr = np.empty(n, dtype=np.complex128)
    cdef cplx[::1] acc = acc_arr
    cdef cplx[::1] term = term_arr
    cdef cplx[::1] tmp = tmp_arr
    cdef cplx[::1] swap
    cdef int steps = <int>ceil(fabs(tau) * norm_bound / THETA)
    if steps < 1:
        steps = 1
    cdef double h = tau / steps
    cdef int s, k, small
    cdef Py_ssize_t i
    cdef double tnorm, anorm, v
    cdef cplx alpha
    with nogil:
        for s in range(steps):
            for i in range(n):
                term[i] = acc[i]
            small = 0
            for k in range(1, max_terms + 1):
                alpha = -1j * h / k
                _csr_matvec(data, indices, indptr, term, tmp, alpha)
                swap = term
                term = tmp
                tmp = swap
                tnorm = 0.0
                anorm = 0.0
                for i in range(n):
                    acc[i] = acc[i] + term[i]
                    v = cabs1(term[i])
                    if v > tnorm:
                        tnorm = v
                    v = cabs1(acc[i])
                    if v > anorm:
                        anorm = v
                if tnorm <= tol * anorm:
                    small += 1
                    if small >= 2:
                        break
                else:
                    small = 0
    return acc_arr


cdef void _csr_matmat(const cplx[::1] data, const int[::1] indices, const int[::1] indptr,
                      Py_ssize_t row0, Py_ssize_t nrows,
                      cplx[:, ::1] x, cplx[:, ::1] y) noexcept nogil:
    # y = A[row0:row0+nrows, :] @ x
    cdef Py_ssize_t m = x.shape[1]
    cdef Py_ssize_t i, k, c, j
    cdef cplx a
    for i in range(nrows):
        for c in range(m):
            y[i, c] = 0
        for k in range(indptr[row0 + i], indptr[row0 + i + 1]):
            a = data[k]
            j = indices[k]
            for c in range(m):
                y[i, c] = y[i, c] + a * x[j, c]


cdef void _csr_matmat_adj_add(const cplx[::1] data, const int[::1] indices, const int[::1] indptr,
                              Py_ssize_t row0, Py_ssize_t nrows,
                              cplx[:, ::1] y, cplx[:, ::1] out) noexcept nogil:
    # out += A[row0:row0+nrows, :] @ y^H
    cdef Py_ssize_t m = y.shape[0]
    cdef Py_ssize_t i, k, c, j
    cdef cplx a
    for i in range(nrows):
        for k in range(indptr[row0 + i], indptr[row0 + i + 1]):
            a = data[k]
            j = indices[k]
            for c in range(m):
                out[i, c] = out[i, c] + a * y[c, j].conjugate()


cdef void _liouvillian(const cplx[::1] kd, const int[::1] ki, const int[::1] kp,
                       const cplx[::1] jd, const int[::1] ji, const int[::1] jp, int n_jumps,
                       cplx[:, ::1] x, cplx[:, ::1] out, cplx[:, ::1] y) noexcept nogil:
    # out = L(x) for Hermitian x, with L(x) = Y + Y^H + sum_k J_k (J_k x)^H, Y = -i K x
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, c, q
    cdef cplx u, w
    _csr_matmat(kd, ki, kp, 0, n, x, y)
    for i in range(n):
        for c in range(i, n):
            u = -1j * y[i, c]
            w = -1j * y[c, i]
            out[i, c] = u + w.conjugate()
            out[c, i] = w + u.conjugate()
    for q in range(n_jumps):
        _csr_matmat(jd, ji, jp, q * n, n, x, y)
        _csr_matmat_adj_add(jd, ji, jp, q * n, n, y, out)


def lindblad_expmv(const cplx[::1] kd, const int[::1] ki, const int[::1] kp,
                   const cplx[::1] jd, const int[::1] ji, const int[::1] jp, int n_jumps,
                   rho, double tau, double norm_bound, double tol=1e-15, int max_terms=80):
    """Return ``exp(tau * L) rho`` for the Lindblad generator defined by ``K`` and jumps."""
    acc_arr = np.array(rho, dtype=np.complex128, copy=True, order="C")
    cdef Py_ssize_t n = acc_arr.shape[0]
    term_arr = np.empty((n, n), dtype=np.complex128)
    tmp_arr = np.empty((n, n), dtype=np.complex128)
    y_arr = np.empty((n, n), dtype=np.complex128)
    cdef cplx[:, ::1] acc = acc_arr
    cdef cplx[:, ::1] term = term_arr
    cdef cplx[:, ::1] tmp = tmp_arr
    cdef cplx[:, ::1] y = y_arr
    cdef cplx[:, ::1] swap
    cdef int steps = <int>ceil(fabs(tau) * norm_bound / THETA)
    if steps < 1:
        steps = 1
    cdef double h = tau / steps
    cdef int s, k, small
    cdef Py_ssize_t i, c
    cdef double tnorm, anorm, v
    cdef cplx alpha
    with nogil:
        for s in range(steps):
            for i in range(n):
                for c in range(n):
                    term[i, c] = acc[i, c]
            small = 0
            for k in range(1, max_terms + 1):
                alpha = h / k
                _liouvillian(kd, ki, kp, jd, ji, jp, n_jumps, term, tmp, y)
                swap = term
                term = tmp
                tmp = swap
                tnorm = 0.0
                anorm = 0.0
                for i in range(n):
                    for c in range(n):
                        term[i, c] = alpha * term[i, c]
                        acc[i, c] = acc[i, c] + term[i, c]
                        v = cabs1(term[i, c])
                        if v > tnorm:
                            tnorm = v
                        v = cabs1(acc[i, c])
                        if v > anorm:
                            anorm = v
                if tnorm <= tol * anorm:
                    small += 1
                    if small >= 2:
                        break
                else:
                    small = 0
    return acc_arr
