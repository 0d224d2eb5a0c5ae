"""Physical parameters, derived couplings and Hamiltonians at three fidelity levels.

Units: every frequency is an ordinary frequency in kHz carrying an implicit
factor 2*pi ("2pi kHz"), so ``g1=50`` means g1 = 2*pi x 50 kHz. Hamiltonian
matrices are returned in those units; evolution converts to rad/us with
``ANGULAR``. Time is in microseconds and hbar = 1.

Levels:

* full       -- cavity (x) N four-level atoms, basis per atom ``g, e, r, s``
* eliminated -- same space, excited states replaced by second-order terms
* spin       -- cavity (x) symmetric Dicke subspace of the two ground states
* two_mode   -- cavity mode ``a`` (x) collective bosonic mode ``b``
* transformed -- two_mode conjugated by the squeezing transformation
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, fields, replace
from typing import Optional

import numpy as np

from .core import (
    AlgebraError,
    Boson,
    Dicke,
    HilbertSpec,
    Multilevel,
    QOperator,
    QuantumState,
    annihilation,
    atom_operator,
    collective_spin_ops,
    embed,
    matrix_exponential,
    top_level_population,
)

ANGULAR = 2.0 * math.pi * 1e-3  # rad/us per 2pi kHz

G, E, R, S = 0, 1, 2, 3  # single-atom basis of the four-level model
ATOMIC, FIELD = "atomic", "field"
MAX_FULL_ATOMS = 3
DETUNING_MARGIN = 10.0


class ParameterError(ValueError):
    pass


class ThresholdError(ValueError):
    """lambda2 >= lambda1: the squeezed dark state is not normalizable."""


class TruncationError(RuntimeError):
    pass


class DegeneracyWarning(UserWarning):
    pass


class DetuningWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PhysicalParams:
    g1: float
    g2: float
    omega1_rabi: float
    omega2_rabi_max: float
    delta1: float
    delta2: float
    phi1: float = 0.0
    phi2: float = 0.0
    cavity_offset: float = 0.0
    two_photon_offset: float = 0.0
    n_atoms: int = 1
    kappa: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        for name in ("g1", "g2", "omega1_rabi", "omega2_rabi_max", "kappa", "gamma"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ParameterError(f"{name} must be finite and non-negative")
        for name in ("delta1", "delta2"):
            v = getattr(self, name)
            if not math.isfinite(v) or v == 0:
                raise ParameterError(f"{name} must be nonzero")
        for name in ("phi1", "phi2", "cavity_offset", "two_photon_offset"):
            if not math.isfinite(getattr(self, name)):
                raise ParameterError(f"{name} must be finite")
        if int(self.n_atoms) != self.n_atoms or self.n_atoms < 1:
            raise ParameterError("n_atoms must be a positive integer")
        object.__setattr__(self, "n_atoms", int(self.n_atoms))

    @property
    def large_detuning_ok(self) -> bool:
        scale = max(
            self.g1, self.g2, self.omega1_rabi, self.omega2_rabi_max,
            abs(self.cavity_offset), abs(self.two_photon_offset),
        )
        return min(abs(self.delta1), abs(self.delta2)) >= DETUNING_MARGIN * scale

    @property
    def xi_g(self) -> float:
        return self.g1 ** 2 / self.delta1

    @property
    def delta_a(self) -> float:
        return self.cavity_offset - self.n_atoms * self.xi_g

    def with_delta_a(self, delta_a: float) -> "PhysicalParams":
        """Choose the cavity offset so that the collective cavity detuning equals ``delta_a``."""
        return replace(self, cavity_offset=delta_a + self.n_atoms * self.xi_g)

    def replace(self, **changes) -> "PhysicalParams":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def benchmark_params(detuning: float = 1.0e6, n_atoms: int = 1_000_000) -> PhysicalParams:
    """Rb-87 ring-cavity parameter set: g = 50, Omega/Delta = 1/200 and 1/250,
    kappa = 25, gamma = 6000 (all 2pi kHz), delta_a = 100, delta_b = 0."""
    p = PhysicalParams(
        g1=50.0, g2=50.0,
        omega1_rabi=detuning / 200.0, omega2_rabi_max=detuning / 250.0,
        delta1=detuning, delta2=detuning,
        n_atoms=n_atoms, kappa=25.0, gamma=6000.0,
    )
    return p.with_delta_a(100.0)


@dataclass(frozen=True)
class DerivedCouplings:
    eta_e: float
    eta_g: float
    xi_e: float
    xi_g: float
    lambda1: float
    lambda2: float
    delta_a: float
    delta_b: float
    mu: Optional[float]
    r: Optional[float]
    theta: Optional[float]
    theta_field: Optional[float]
    below_threshold: bool
    omega2_exceeds_max: bool
    large_detuning_ok: bool

    @property
    def above_threshold(self) -> bool:
        return not self.below_threshold


def squeeze_params(lams, phases, branch: str = ATOMIC):
    """Squeezing strength and phase ``(r, theta)`` that turn the Raman coupling
    into a single annihilation operator.

    The coupling to the unsqueezed mode is ``l1 e^{i p1} c + l2 e^{i p2} c^dag``
    (atomic branch, ``c = b``) or ``l1 e^{-i p1} c + l2 e^{i p2} c^dag``
    (field branch, ``c = a``). With ``S^dag c S = c cosh r - e^{i theta} c^dag sinh r``
    the ``c^dag`` component vanishes when ``tanh r = l2/l1`` and ``theta`` is the
    phase of ``l2 e^{i p2} / (l1 e^{+-i p1})``.
    """
    l1, l2 = (float(x) for x in lams)
    p1, p2 = (float(x) for x in phases)
    if l1 < 0 or l2 < 0:
        raise ParameterError("Raman couplings must be non-negative")
    if l2 >= l1:
        raise ThresholdError("lambda2 >= lambda1: no dark squeezed state")
    if branch not in (ATOMIC, FIELD):
        raise ParameterError(f"unknown branch {branch!r}")
    r = math.atanh(l2 / l1)
    if l2 == 0.0:
        return 0.0, 0.0
    first = l1 * np.exp(1j * p1 if branch == ATOMIC else -1j * p1)
    second = l2 * np.exp(1j * p2)
    # cosh/sinh ratio is real positive, so only the coefficient phases matter
    theta = float(np.angle(second * math.cosh(r) / (first * math.sinh(r))))
    return r, theta


def derive_couplings(params: PhysicalParams, omega2_current: Optional[float] = None) -> DerivedCouplings:
    om2 = params.omega2_rabi_max if omega2_current is None else float(omega2_current)
    if om2 < 0:
        raise ParameterError("omega2 must be non-negative")
    exceeds = om2 > params.omega2_rabi_max * (1 + 1e-12)
    if exceeds:
        warnings.warn("omega2 exceeds omega2_rabi_max", DetuningWarning, stacklevel=2)
    d1, d2 = params.delta1, params.delta2
    l1 = params.omega1_rabi * params.g1 / d1
    l2 = om2 * params.g2 / d2
    N = params.n_atoms
    below = abs(l2) < abs(l1)
    mu = r = theta = theta_f = None
    if below:
        mu = math.sqrt(N * (l1 * l1 - l2 * l2))
        # a negative coupling (negative detuning) is a pi shift of its laser phase
        lams = (abs(l1), abs(l2))
        phases = (params.phi1 + (math.pi if l1 < 0 else 0.0), params.phi2 + (math.pi if l2 < 0 else 0.0))
        r, theta = squeeze_params(lams, phases, ATOMIC)
        _, theta_f = squeeze_params(lams, phases, FIELD)
    return DerivedCouplings(
        eta_e=params.omega1_rabi ** 2 / d1,
        eta_g=om2 ** 2 / d2,
        xi_e=params.g2 ** 2 / d2,
        xi_g=params.g1 ** 2 / d1,
        lambda1=l1,
        lambda2=l2,
        delta_a=params.cavity_offset - N * params.g1 ** 2 / d1,
        delta_b=params.two_photon_offset,
        mu=mu,
        r=r,
        theta=theta,
        theta_field=theta_f,
        below_threshold=below,
        omega2_exceeds_max=exceeds,
        large_detuning_ok=params.large_detuning_ok,
    )


# ---------------------------------------------------------------- spaces

def full_space(cavity_dim: int, n_atoms: int) -> HilbertSpec:
    return HilbertSpec.of(Boson(cavity_dim), Multilevel(4, n_atoms))


def spin_space(cavity_dim: int, n_atoms: int) -> HilbertSpec:
    return HilbertSpec.of(Boson(cavity_dim), Dicke(n_atoms))


def two_mode_space(dim_a: int, dim_b: int) -> HilbertSpec:
    return HilbertSpec.of(Boson(dim_a), Boson(dim_b))


def _proj(i: int, j: int) -> np.ndarray:
    m = np.zeros((4, 4), dtype=complex)
    m[i, j] = 1.0
    return m


def _mode_ops(space: HilbertSpec, index: int):
    a = embed(annihilation(space.dims[index]), space, index)
    return a, a.dag


def _atom_sum(space: HilbertSpec, i: int, j: int) -> QOperator:
    """Collective ``sum_k |i_k><j_k|`` on the multilevel factor of ``space``."""
    factor = space.factors[1]
    local = sum(atom_operator(_proj(i, j), factor, k) for k in range(factor.count))
    return embed(QOperator(HilbertSpec.of(factor), local), space, 1)


def _check_full_atoms(N: int) -> None:
    if not 1 <= N <= MAX_FULL_ATOMS:
        raise ParameterError(f"multilevel models support 1..{MAX_FULL_ATOMS} atoms, got {N}")


def _h_i0(params, a, ad, e_count) -> QOperator:
    return params.cavity_offset * (ad @ a) + params.two_photon_offset * e_count


def build_full_hamiltonian(params: PhysicalParams, omega2_current: float, cavity_dim: int,
                           n_atoms: Optional[int] = None) -> QOperator:
    """Interaction-picture Hamiltonian of N four-level atoms in the cavity."""
    N = params.n_atoms if n_atoms is None else n_atoms
    _check_full_atoms(N)
    space = full_space(cavity_dim, N)
    a, ad = _mode_ops(space, 0)
    ee = _atom_sum(space, E, E)
    A1 = params.g1 * (a @ _atom_sum(space, R, G)) + (
        params.omega1_rabi * np.exp(1j * params.phi1)) * _atom_sum(space, R, E)
    A2 = params.g2 * (a @ _atom_sum(space, S, E)) + (
        omega2_current * np.exp(1j * params.phi2)) * _atom_sum(space, S, G)
    H = (
        _h_i0(params, a, ad, ee)
        + A1 + A1.dag + params.delta1 * _atom_sum(space, R, R)
        + A2 + A2.dag + params.delta2 * _atom_sum(space, S, S)
    )
    return H


def build_eliminated_hamiltonian(params: PhysicalParams, omega2_current: float, cavity_dim: int,
                                 n_atoms: Optional[int] = None) -> QOperator:
    """Second-order effective Hamiltonian keeping the excited-state, Stark and exchange terms.

    The exchange sums are taken as operator products ``R+ R-`` of the
    collective ``R+ = sum_j |r_j><g_j|`` (and likewise for ``s``/``e``), so the
    ``j = k`` terms contribute ``|r_j><r_j|``.
    """
    N = params.n_atoms if n_atoms is None else n_atoms
    _check_full_atoms(N)
    c = derive_couplings(params, omega2_current)
    space = full_space(cavity_dim, N)
    a, ad = _mode_ops(space, 0)
    n_a = ad @ a
    half_n = (N / 2.0) * QOperator(space, np.eye(space.dim))
    ee = _atom_sum(space, E, E)
    gg = _atom_sum(space, G, G)
    sz = 0.5 * (ee - gg)
    s_plus = _atom_sum(space, E, G)
    rr = _atom_sum(space, R, R)
    ss = _atom_sum(space, S, S)
    r_plus = _atom_sum(space, R, G)
    q_plus = _atom_sum(space, S, E)
    ident = QOperator(space, np.eye(space.dim))
    raman1 = (c.lambda1 * np.exp(-1j * params.phi1)) * (a @ s_plus)
    raman2 = (c.lambda2 * np.exp(1j * params.phi2)) * (ad @ s_plus)
    h1 = (
        ((params.delta1 + c.eta_e) * ident + c.xi_g * n_a) @ rr
        + c.xi_g * (r_plus @ r_plus.dag)
        - c.eta_e * (sz + half_n)
        - c.xi_g * (n_a @ (half_n - sz))
        - (raman1 + raman1.dag)
    )
    h2 = (
        ((params.delta2 + c.eta_g) * ident + c.xi_e * n_a) @ ss
        + c.xi_e * (q_plus @ q_plus.dag)
        - c.xi_e * (n_a @ (sz + half_n))
        - c.eta_g * (half_n - sz)
        - (raman2 + raman2.dag)
    )
    return _h_i0(params, a, ad, ee) + h1 + h2


def build_spin_hamiltonian(params: PhysicalParams, omega2_current: float, cavity_dim: int,
                           n_atoms: Optional[int] = None) -> QOperator:
    """Ground-manifold Hamiltonian on cavity (x) Dicke(N)."""
    N = params.n_atoms if n_atoms is None else n_atoms
    c = derive_couplings(params, omega2_current)
    space = spin_space(cavity_dim, N)
    a, ad = _mode_ops(space, 0)
    sp_, _, sz_ = collective_spin_ops(N)
    s_plus = embed(sp_, space, 1)
    sz = embed(sz_, space, 1)
    n_a = ad @ a
    half_n = (N / 2.0) * QOperator(space, np.eye(space.dim))
    exc = sz + half_n
    raman = (c.lambda1 * np.exp(-1j * params.phi1)) * (a @ s_plus) + (
        c.lambda2 * np.exp(1j * params.phi2)) * (ad @ s_plus)
    return (
        params.cavity_offset * n_a
        + params.two_photon_offset * exc
        - c.eta_e * exc
        - c.xi_g * (n_a @ (half_n - sz))
        - c.xi_e * (n_a @ exc)
        - c.eta_g * (half_n - sz)
        - (raman + raman.dag)
    )


def _warn_degenerate(c: DerivedCouplings) -> bool:
    degenerate = c.delta_a == 0 and c.delta_b == 0 and c.lambda2 > 0
    if degenerate:
        warnings.warn(
            "delta_a = delta_b = 0: atomic and field squeezed states are both null states",
            DegeneracyWarning, stacklevel=3,
        )
    return degenerate


def build_two_mode_hamiltonian(params: PhysicalParams, omega2_current: float, dim_a: int, dim_b: int,
                               keep_residual_stark: bool = False) -> QOperator:
    """Bosonized Hamiltonian on cavity (x) collective mode; constant terms dropped.

    ``keep_residual_stark`` adds ``-(eta_e - eta_g) b^dag b``, the Stark term that
    the bosonic limit of the spin model produces but the two-mode form omits.
    """
    c = derive_couplings(params, omega2_current)
    _warn_degenerate(c)
    space = two_mode_space(dim_a, dim_b)
    a, b = annihilation(dim_a).matrix, annihilation(dim_b).matrix
    ad, bd = a.conj().T, b.conj().T
    root_n = math.sqrt(params.n_atoms)
    coupling = root_n * (
        (c.lambda1 * np.exp(-1j * params.phi1)) * np.kron(a, bd)
        + (c.lambda2 * np.exp(1j * params.phi2)) * np.kron(ad, bd)
    )
    delta_b = c.delta_b
    if keep_residual_stark:
        delta_b = delta_b - (c.eta_e - c.eta_g)
    H = (c.delta_a * np.kron(ad @ a, np.eye(dim_b)) + delta_b * np.kron(np.eye(dim_a), bd @ b)
         - (coupling + coupling.conj().T))
    return QOperator(space, H)


def build_transformed_hamiltonian(params: PhysicalParams, omega2_current: float, dim_a: int, dim_b: int,
                                  branch: str = ATOMIC) -> QOperator:
    """Beam-splitter Hamiltonian left after the squeezing transformation.

    Atomic branch keeps ``delta_a a^dag a``; field branch keeps ``delta_b b^dag b``.
    """
    c = derive_couplings(params, omega2_current)
    if not c.below_threshold:
        raise ThresholdError("lambda2 >= lambda1: transformation undefined")
    space = two_mode_space(dim_a, dim_b)
    a, b = annihilation(dim_a).matrix, annihilation(dim_b).matrix
    ad, bd = a.conj().T, b.conj().T
    bs = np.exp(-1j * params.phi1) * np.kron(a, bd)
    if branch == ATOMIC:
        detuning = c.delta_a * np.kron(ad @ a, np.eye(dim_b))
    elif branch == FIELD:
        detuning = c.delta_b * np.kron(np.eye(dim_a), bd @ b)
    else:
        raise ParameterError(f"unknown branch {branch!r}")
    return QOperator(space, detuning - c.mu * (bs + bs.conj().T))


# ---------------------------------------------------------------- squeezing

def squeeze_operator(r: float, theta: float, dim: int) -> QOperator:
    """``exp((xi^* c^2 - xi c^dag^2)/2)`` with ``xi = r e^{i theta}`` on a truncated mode.

    The truncated generator is anti-Hermitian, so the result is exactly unitary;
    matrix elements near the top levels differ from the untruncated operator.
    """
    if r < 0:
        raise ParameterError("squeezing strength must be non-negative")
    c = annihilation(dim)
    xi = r * np.exp(1j * theta)
    gen = 0.5 * (np.conj(xi) * (c @ c) - xi * (c.dag @ c.dag))
    return matrix_exponential(gen)


def squeezed_vacuum_amplitudes(r: float, theta: float, dim: int) -> np.ndarray:
    """Closed-form Fock amplitudes of ``S(r e^{i theta})|0>``, truncated (not renormalized)."""
    out = np.zeros(dim, dtype=complex)
    t = -np.exp(1j * theta) * math.tanh(r)
    amp = 1.0 / math.sqrt(math.cosh(r))
    for n in range(0, (dim + 1) // 2):
        out[2 * n] = amp
        # c_{2n+2} / c_{2n} = t * sqrt((2n+1)(2n+2)) / (2(n+1))
        amp = amp * t * math.sqrt((2 * n + 1) * (2 * n + 2)) / (2 * (n + 1))
    return out


def squeezed_vacuum(r: float, theta: float, dim: int, pad: int = 120) -> np.ndarray:
    """``S|0>`` via the matrix exponential on a padded mode, cropped to ``dim`` levels."""
    return squeeze_operator(r, theta, dim + pad).matrix[:dim, 0].copy()


def target_state(params: PhysicalParams, branch: str, dim_a: int, dim_b: int,
                 omega2_current: Optional[float] = None,
                 truncation_tol: float = 1e-6) -> QuantumState:
    """Dark state ``S_b(xi)|0,0>`` (atomic) or ``S_a(zeta)|0,0>`` (field), normalized."""
    c = derive_couplings(params, omega2_current)
    if not c.below_threshold:
        raise ThresholdError("lambda2 >= lambda1: no dark squeezed state")
    space = two_mode_space(dim_a, dim_b)
    if branch == ATOMIC:
        sq = squeezed_vacuum(c.r, c.theta, dim_b)
        vec = np.kron(_fock(dim_a, 0), sq)
    elif branch == FIELD:
        sq = squeezed_vacuum(c.r, c.theta_field, dim_a)
        vec = np.kron(sq, _fock(dim_b, 0))
    else:
        raise ParameterError(f"unknown branch {branch!r}")
    _check_truncation(sq, truncation_tol)
    return QuantumState.ket(space, vec, normalize=True)


def _fock(dim: int, n: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[n] = 1.0
    return v


def _check_truncation(single_mode: np.ndarray, tol: float) -> None:
    lost = abs(1.0 - float(np.vdot(single_mode, single_mode).real))
    top = float(np.sum(np.abs(single_mode[-2:]) ** 2))
    if lost + top > tol:
        raise TruncationError(
            f"squeezed state needs more Fock levels: lost norm {lost:.2e}, top-level population {top:.2e}"
        )


def dicke_embedding(n_atoms: int) -> np.ndarray:
    """Isometry from Dicke(N) into the ground manifold of N four-level atoms.

    Column ``m`` is the normalized symmetric state with ``m`` atoms in ``e``
    and the rest in ``g``.
    """
    _check_full_atoms(n_atoms)
    dim = 4 ** n_atoms
    out = np.zeros((dim, n_atoms + 1), dtype=complex)
    for idx in range(dim):
        digits = np.base_repr(idx, 4).zfill(n_atoms)[-n_atoms:] if n_atoms else ""
        levels = [int(d) for d in digits]
        if all(l in (G, E) for l in levels):
            m = levels.count(E)
            out[idx, m] = 1.0
    out /= np.linalg.norm(out, axis=0)
    return out


def hp_target_amplitudes(params: PhysicalParams, n_levels: int, omega2_current: Optional[float] = None,
                         truncation_tol: float = 1e-6) -> np.ndarray:
    """Squeezed-vacuum amplitudes of the collective mode, to be placed on Dicke levels."""
    c = derive_couplings(params, omega2_current)
    if not c.below_threshold:
        raise ThresholdError("lambda2 >= lambda1: no dark squeezed state")
    sq = squeezed_vacuum(c.r, c.theta, n_levels)
    _check_truncation(sq, truncation_tol)
    return sq / np.linalg.norm(sq)


def spin_target_state(params: PhysicalParams, cavity_dim: int, omega2_current: Optional[float] = None,
                      truncation_tol: float = 1e-6) -> QuantumState:
    """Holstein-Primakoff image of the atomic-branch target on cavity (x) Dicke(N)."""
    N = params.n_atoms
    amps = hp_target_amplitudes(params, N + 1, omega2_current, truncation_tol)
    return QuantumState.ket(spin_space(cavity_dim, N), np.kron(_fock(cavity_dim, 0), amps), normalize=True)


def full_target_state(params: PhysicalParams, cavity_dim: int, omega2_current: Optional[float] = None,
                      truncation_tol: float = 1e-6) -> QuantumState:
    N = params.n_atoms
    amps = hp_target_amplitudes(params, N + 1, omega2_current, truncation_tol)
    atoms = dicke_embedding(N) @ amps
    return QuantumState.ket(full_space(cavity_dim, N), np.kron(_fock(cavity_dim, 0), atoms), normalize=True)


def ground_vacuum(space: HilbertSpec) -> QuantumState:
    """All modes in vacuum, all atoms in ``g`` (level 0 of every factor)."""
    return QuantumState.basis(space, [0] * len(space.factors))


def truncation_monitor(state: QuantumState) -> float:
    return top_level_population(state.data, state.space)
