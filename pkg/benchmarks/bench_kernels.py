"""Compare the compiled and pure-Python propagation kernels.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Times one Taylor ``expm_multiply`` step on the benchmark two-mode Hamiltonian
and one Liouvillian step on a small open-system problem, for every available
backend, and checks that the backends agree.
"""
import argparse
import timeit

import numpy as np

from darksqueeze import kernels
from darksqueeze.dynamics import CollapseSet, ModelLevel, default_collapse
from darksqueeze.model import ANGULAR, benchmark_params, build_two_mode_hamiltonian, two_mode_space


def cases():
    p = benchmark_params()
    out = []
    for dims in ((10, 60), (20, 100)):
        H = kernels.as_csr(ANGULAR * build_two_mode_hamiltonian(p, p.omega2_rabi_max, *dims).matrix)
        psi = np.zeros(H.shape[0], dtype=complex)
        psi[0] = 1.0
        out.append((f"expmv H {dims[0]}x{dims[1]}",
                    lambda backend, H=H, psi=psi: kernels.expmv_hermitian(H, psi, 0.05, backend=backend)))
    dims = (4, 24)
    space = two_mode_space(*dims)
    H = ANGULAR * build_two_mode_hamiltonian(p, p.omega2_rabi_max, *dims).matrix
    jumps = default_collapse(p, ModelLevel(dim_a=dims[0], dim_b=dims[1]), space).scaled_jumps()
    L = kernels.Liouvillian(H, jumps)
    rho = np.zeros((space.dim, space.dim), dtype=complex)
    rho[0, 0] = 1.0
    out.append((f"lindblad {dims[0]}x{dims[1]}", lambda backend: L.expmv(rho, 0.05, backend=backend)))
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    backends = kernels.available_backends()
    print(f"default backend: {kernels.BACKEND}; available: {', '.join(backends)}")
    print(f"{'case':<22}" + "".join(f"{b + ' [ms]':>16}" for b in backends) + f"{'speedup':>10}{'max diff':>12}")
    for name, fn in cases():
        times, results = {}, {}
        for b in backends:
            results[b] = fn(b)
            times[b] = min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat)) * 1e3
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        diff = max(np.max(np.abs(results[b] - results[backends[0]])) for b in backends)
        print(f"{name:<22}" + "".join(f"{times[b]:>16.2f}" for b in backends) + f"{speed:>10.1f}x{diff:>12.1e}")


if __name__ == "__main__":
    main()
