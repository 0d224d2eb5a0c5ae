"""Squeezing metrics, spectral gaps and the decoherence error budget.

Quadrature convention: ``X_phi = (a e^{-i phi} + a^dag e^{i phi}) / sqrt(2)``,
so the vacuum variance is 1/2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    AlgebraError,
    Boson,
    Dicke,
    QOperator,
    QuantumState,
    SpaceMismatchError,
    annihilation,
    collective_spin_ops,
    embed,
    expectation,
    variance,
)
from .model import ANGULAR, ParameterError, PhysicalParams, derive_couplings

HP_WARNING_THRESHOLD = 0.05


class DegeneracyError(ValueError):
    pass


def quadrature_operator(space, mode: int, phi: float) -> QOperator:
    if not isinstance(space.factors[mode], Boson):
        raise AlgebraError(f"factor {mode} is not bosonic")
    a = embed(annihilation(space.dims[mode]), space, mode)
    return (1 / math.sqrt(2)) * (np.exp(-1j * phi) * a + np.exp(1j * phi) * a.dag)


def quadrature_variance(state: QuantumState, mode: int, phi: float) -> float:
    return variance(state, quadrature_operator(state.space, mode, phi))


def quadrature_extrema(state: QuantumState, mode: int):
    """Minimum and maximum of ``Var(X_phi)`` over ``phi`` (closed form from the covariance)."""
    a = embed(annihilation(state.space.dims[mode]), state.space, mode)
    m1 = expectation(state, a)
    m2 = expectation(state, a @ a) - m1 * m1
    n = expectation(state, a.dag @ a).real - abs(m1) ** 2
    # Var(X_phi) = n + 1/2 + Re(m2 e^{-2 i phi})
    return n + 0.5 - abs(m2), n + 0.5 + abs(m2)


def squeezing_db(var: float) -> float:
    """Squeezing in dB relative to vacuum noise; positive means below vacuum."""
    if not var > 0:
        raise ValueError("variance must be positive")
    return -10.0 * math.log10(2.0 * var)


def fidelity(state: QuantumState, target: QuantumState) -> float:
    """``|<psi|phi>|^2`` for kets, ``<phi|rho|phi>`` for a density matrix against a ket."""
    if state.space != target.space:
        raise SpaceMismatchError("states live on different spaces")
    if state.is_ket and target.is_ket:
        f = abs(np.vdot(target.data, state.data)) ** 2
    elif not state.is_ket and target.is_ket:
        f = np.vdot(target.data, state.data @ target.data).real
    elif state.is_ket and not target.is_ket:
        f = np.vdot(state.data, target.data @ state.data).real
    else:
        raise NotImplementedError("mixed-mixed fidelity is not supported")
    return float(min(1.0, max(0.0, f)))


def gap_analytic(mu: float, delta: float) -> float:
    """``sqrt(mu^2 + delta^2/4) - delta/2``, written in a cancellation-free form."""
    if mu < 0:
        raise ValueError("mu must be non-negative")
    root = math.sqrt(mu * mu + delta * delta / 4.0)
    if delta >= 0:
        return mu * mu / (root + delta / 2.0) if root + delta / 2.0 > 0 else 0.0
    return root - delta / 2.0


def _single_quantum_indices(space):
    """Indices of the basis states with exactly one quantum across two bosonic factors."""
    if len(space.factors) != 2 or not all(isinstance(f, Boson) for f in space.factors):
        raise AlgebraError("gap_numeric expects a two-mode bosonic operator")
    da, db = space.dims
    if da < 2 or db < 2:
        raise AlgebraError("both modes need at least two levels")
    return [1 * db + 0, 0 * db + 1]  # |1,0>, |0,1>


def gap_numeric(H: QOperator, zero_tol: float = 1e-12) -> float:
    """Smallest nonzero |E| in the one-quantum block of a number-conserving two-mode H."""
    idx = _single_quantum_indices(H.space)
    block = H.matrix[np.ix_(idx, idx)]
    diag = np.real(np.diag(block))
    scale = max(np.max(np.abs(block)), 1e-300)
    if np.all(np.abs(diag) <= zero_tol * scale):
        raise DegeneracyError("delta_a = delta_b = 0: dark state is degenerate")
    evals = np.linalg.eigvalsh(0.5 * (block + block.conj().T))
    nonzero = np.abs(evals[np.abs(evals) > zero_tol * scale])
    if nonzero.size == 0:
        raise DegeneracyError("one-quantum block has no nonzero eigenvalue")
    return float(nonzero.min())


@dataclass(frozen=True)
class ErrorBudget:
    T: float
    deltaE_max: float
    deltaE_min: float
    delta_a: float
    P_b: float
    kappa_e: float
    gamma_e: float
    total_error: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def leakage_estimate(T: float, deltaE_min: float, delta_a: float) -> float:
    """``1/(dE_min T)^2 + 1/(delta_a T)^2`` with rates converted to rad/us."""
    return 1.0 / (ANGULAR * deltaE_min * T) ** 2 + 1.0 / (ANGULAR * delta_a * T) ** 2


def error_budget(params: PhysicalParams, T: float,
                 mu_path: Optional[Sequence[float]] = None,
                 delta_a: Optional[float] = None) -> ErrorBudget:
    """Adiabatic leakage and decoherence estimate for a ramp of duration ``T`` (us).

    ``mu_path = (mu_max, mu_min)`` defaults to the couplings at the start and end
    of the ramp. ``T`` may also be a ``Schedule``.
    """
    T = float(getattr(T, "t_total", T))
    da = params.delta_a if delta_a is None else float(delta_a)
    if not da > 0:
        raise ParameterError("delta_a must be positive for budget")
    if not T > 0:
        raise ParameterError("t_total must be positive for budget")
    if mu_path is None:
        start = derive_couplings(params, 0.0)
        end = derive_couplings(params, params.omega2_rabi_max)
        if not end.below_threshold:
            raise ParameterError("ramp crosses lambda2 >= lambda1; no budget")
        mu_path = (start.mu, end.mu)
    mu_max, mu_min = mu_path
    de_max = gap_analytic(mu_max, da)
    de_min = gap_analytic(mu_min, da)
    p_b = leakage_estimate(T, de_min, da)
    kappa_e = p_b * params.kappa
    gamma_e = params.gamma * params.omega2_rabi_max ** 2 / (2.0 * params.delta2 ** 2)
    total = (kappa_e + gamma_e) * ANGULAR * T
    return ErrorBudget(T, de_max, de_min, da, p_b, kappa_e, gamma_e, total)


def hp_validity(state: QuantumState, N: Optional[int] = None, mode: Optional[int] = None) -> float:
    """Collective excitation fraction ``<b^dag b>/N`` (or ``(<Sz>+N/2)/N`` on a Dicke factor)."""
    space = state.space
    for i, f in enumerate(space.factors):
        if isinstance(f, Dicke) and (mode is None or mode == i):
            _, _, sz = collective_spin_ops(f.N)
            exc = expectation(state, embed(sz, space, i)).real + f.N / 2.0
            return exc / f.N
    if N is None:
        raise ValueError("N is required for a bosonic collective mode")
    idx = 1 if mode is None else mode
    if not isinstance(space.factors[idx], Boson):
        raise AlgebraError("collective-mode factor must be bosonic")
    b = embed(annihilation(space.dims[idx]), space, idx)
    return expectation(state, b.dag @ b).real / N
