import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp

from darksqueeze import kernels

from conftest import random_hermitian


def dense_lindblad(H, jumps):
    n = H.shape[0]
    eye = np.eye(n)
    L = -1j * (np.kron(H, eye) - np.kron(eye, H.T))
    for J in jumps:
        JdJ = J.conj().T @ J
        L += np.kron(J, J.conj()) - 0.5 * np.kron(JdJ, eye) - 0.5 * np.kron(eye, JdJ.T)
    return L


def test_backend_selected():
    assert kernels.BACKEND in kernels.available_backends()
    assert "python" in kernels.available_backends()


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.expmv_hermitian(np.eye(2), np.ones(2), 0.1, backend="fortran")


@pytest.mark.parametrize("tau", [0.0, 0.01, 1.7, -3.0])
def test_expmv_matches_expm(backend, rng, tau):
    H = random_hermitian(rng, 30, scale=2.0)
    psi = rng.normal(size=30) + 1j * rng.normal(size=30)
    out = kernels.expmv_hermitian(H, psi, tau, backend=backend)
    ref = scipy.linalg.expm(-1j * tau * H) @ psi
    np.testing.assert_allclose(out, ref, atol=1e-12 * np.linalg.norm(psi))


def test_expmv_zero_matrix(backend):
    psi = np.array([1.0, 2.0j, 0.5])
    out = kernels.expmv_hermitian(sp.csr_matrix((3, 3)), psi, 5.0, backend=backend)
    np.testing.assert_allclose(out, psi)


def test_backends_agree(rng):
    H = random_hermitian(rng, 25)
    psi = rng.normal(size=25) + 0j
    outs = [kernels.expmv_hermitian(H, psi, 0.8, backend=b) for b in kernels.available_backends()]
    for o in outs[1:]:
        np.testing.assert_allclose(o, outs[0], atol=1e-13)


def test_lindblad_matches_dense_superoperator(backend, rng):
    n = 6
    H = random_hermitian(rng, n)
    jumps = [0.7 * (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) for _ in range(2)]
    v = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = v @ v.conj().T
    rho /= np.trace(rho)
    L = kernels.Liouvillian(H, jumps)
    out = L.expmv(rho, 0.37, backend=backend)
    # row-major vectorization: vec(A rho B) = (A kron B^T) vec(rho)
    ref = (scipy.linalg.expm(0.37 * dense_lindblad(H, jumps)) @ rho.reshape(-1)).reshape(n, n)
    np.testing.assert_allclose(out, ref, atol=1e-12)
    assert np.trace(out).real == pytest.approx(1.0, abs=1e-12)


def test_lindblad_apply_matches_dense(rng):
    n = 5
    H = random_hermitian(rng, n)
    jumps = [rng.normal(size=(n, n)) + 0j]
    rho = np.diag(rng.uniform(size=n)) + 0j
    L = kernels.Liouvillian(H, jumps)
    ref = (dense_lindblad(H, jumps) @ rho.reshape(-1)).reshape(n, n)
    np.testing.assert_allclose(L.apply(rho), ref, atol=1e-12)


def test_lindblad_without_jumps_is_unitary(backend, rng):
    n = 8
    H = random_hermitian(rng, n)
    psi = rng.normal(size=n) + 1j * rng.normal(size=n)
    psi /= np.linalg.norm(psi)
    rho = np.outer(psi, psi.conj())
    out = kernels.Liouvillian(H).expmv(rho, 1.3, backend=backend)
    phi = scipy.linalg.expm(-1.3j * H) @ psi
    np.testing.assert_allclose(out, np.outer(phi, phi.conj()), atol=1e-12)


def test_norm_bound_dominates_spectral_norm(rng):
    H = random_hermitian(rng, 20)
    assert kernels.norm_bound(H) >= np.linalg.norm(H, 2) - 1e-12
    assert kernels.norm_bound(sp.csr_matrix((4, 4))) == 0.0


def test_benchmark_script_runs(capsys):
    import runpy
    from pathlib import Path

    script = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    mod = runpy.run_path(str(script))
    mod["main"](["--repeat", "1"])
    out = capsys.readouterr().out
    assert "expmv H 10x60" in out and "lindblad" in out
