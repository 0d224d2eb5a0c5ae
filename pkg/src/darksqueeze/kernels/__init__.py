"""Propagation kernels with a compiled core and a pure-Python fallback.

The Cython extension ``_ext`` is used when it is importable. Setting the
environment variable ``DARKSQUEEZE_PURE_PYTHON=1`` forces the fallback.
"""
import os

import numpy as np
import scipy.sparse as sp

from . import _pure

try:
    if os.environ.get("DARKSQUEEZE_PURE_PYTHON", "").strip() not in ("", "0"):
        raise ImportError("pure-Python backend requested")
    from . import _ext
except ImportError:
    _ext = None

BACKEND = "cython" if _ext is not None else "python"

_IMPLS = {"python": _pure}
if _ext is not None:
    _IMPLS["cython"] = _ext


def available_backends():
    return sorted(_IMPLS)


def _impl(backend):
    name = backend or BACKEND
    try:
        return _IMPLS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} is not available") from None


def as_csr(matrix):
    """CSR with ``complex128`` data and ``intc`` indices, as the kernels expect."""
    m = sp.csr_matrix(matrix, dtype=np.complex128)
    m.sum_duplicates()
    m.indices = m.indices.astype(np.intc, copy=False)
    m.indptr = m.indptr.astype(np.intc, copy=False)
    return m


def norm_bound(matrix) -> float:
    """max(1-norm, inf-norm) of a sparse matrix; bounds the spectral norm."""
    a = abs(sp.csr_matrix(matrix))
    if a.nnz == 0:
        return 0.0
    return float(max(np.asarray(a.sum(axis=0)).max(), np.asarray(a.sum(axis=1)).max()))


def expmv_hermitian(H, psi, tau, tol=1e-15, backend=None):
    """``exp(-1j * tau * H) @ psi`` by substepped Taylor series."""
    H = as_csr(H)
    return _impl(backend).expmv_taylor(
        H.data, H.indices, H.indptr, np.ascontiguousarray(psi, dtype=np.complex128),
        float(tau), norm_bound(H), tol,
    )


class Liouvillian:
    """Lindblad generator ``L(rho) = -i[H, rho] + sum_k D[J_k](rho)``.

    ``jumps`` are already scaled by the square root of their rates.
    """

    def __init__(self, H, jumps=()):
        H = as_csr(H)
        n = H.shape[0]
        jumps = [as_csr(J) for J in jumps]
        K = H.copy()
        for J in jumps:
            K = K - 0.5j * (J.conj().T @ J)
        self.K = as_csr(K)
        self.n = n
        self.n_jumps = len(jumps)
        if jumps:
            self.J = as_csr(sp.vstack(jumps))
        else:
            self.J = as_csr(sp.csr_matrix((1, n)))
        jn = sum(norm_bound(J) ** 2 for J in jumps)
        self.norm = 2.0 * norm_bound(self.K) + jn

    def expmv(self, rho, tau, tol=1e-15, backend=None):
        return _impl(backend).lindblad_expmv(
            self.K.data, self.K.indices, self.K.indptr,
            self.J.data, self.J.indices, self.J.indptr, self.n_jumps,
            np.ascontiguousarray(rho, dtype=np.complex128), float(tau), self.norm, tol,
        )

    def apply(self, rho):
        """``L(rho)`` (reference implementation, used by adaptive integrators)."""
        y = -1j * (self.K @ rho)
        out = y + (-1j * (self.K @ rho.conj().T)).conj().T
        for q in range(self.n_jumps):
            J = self.J[q * self.n:(q + 1) * self.n]
            out = out + J @ rho @ J.conj().T
        return out
