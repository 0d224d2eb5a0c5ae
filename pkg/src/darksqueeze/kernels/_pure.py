"""Pure-Python (scipy.sparse) fallback for the compiled kernels.

Same algorithm and stopping rule as ``_ext.pyx``; used when the extension is
not built or ``DARKSQUEEZE_PURE_PYTHON`` is set.
"""
import math

import numpy as np
import scipy.sparse as sp

THETA = 3.0


def _csr(data, indices, indptr, shape):
    return sp.csr_matrix((data, indices, indptr), shape=shape)


def _steps(tau, norm_bound):
    return max(1, int(math.ceil(abs(tau) * norm_bound / THETA)))


def expmv_taylor(data, indices, indptr, psi, tau, norm_bound, tol=1e-15, max_terms=80):
    n = len(indptr) - 1
    H = _csr(data, indices, indptr, (n, n))
    acc = np.array(psi, dtype=np.complex128, copy=True)
    steps = _steps(tau, norm_bound)
    h = tau / steps
    for _ in range(steps):
        term = acc.copy()
        small = 0
        for k in range(1, max_terms + 1):
            term = (-1j * h / k) * (H @ term)
            acc += term
            if np.max(np.abs(term.real) + np.abs(term.imag)) <= tol * np.max(
                np.abs(acc.real) + np.abs(acc.imag)
            ):
                small += 1
                if small >= 2:
                    break
            else:
                small = 0
    return acc


def _liouvillian(K, jumps, x):
    y = -1j * (K @ x)
    out = y + y.conj().T
    for J in jumps:
        z = J @ x
        out += J @ z.conj().T
    return out


def lindblad_expmv(kd, ki, kp, jd, ji, jp, n_jumps, rho, tau, norm_bound, tol=1e-15, max_terms=80):
    acc = np.array(rho, dtype=np.complex128, copy=True, order="C")
    n = acc.shape[0]
    K = _csr(kd, ki, kp, (n, n))
    stacked = _csr(jd, ji, jp, (n * n_jumps, n)) if n_jumps else None
    jumps = [stacked[q * n:(q + 1) * n] for q in range(n_jumps)]
    steps = _steps(tau, norm_bound)
    h = tau / steps
    for _ in range(steps):
        term = acc.copy()
        small = 0
        for k in range(1, max_terms + 1):
            term = (h / k) * _liouvillian(K, jumps, term)
            acc += term
            if np.max(np.abs(term.real) + np.abs(term.imag)) <= tol * np.max(
                np.abs(acc.real) + np.abs(acc.imag)
            ):
                small += 1
                if small >= 2:
                    break
            else:
                small = 0
    return acc
