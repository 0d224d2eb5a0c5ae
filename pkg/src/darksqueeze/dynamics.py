"""Time evolution under ramped Hamiltonians and the protocol runners.

The default integrator is piecewise constant: the Hamiltonian is frozen at the
midpoint of each of ``n_steps`` segments and the exact segment propagator is
applied (dense eigendecomposition for small spaces, the Taylor kernels in
``darksqueeze.kernels`` otherwise). ``method="adaptive"`` integrates the
continuous-time equations with scipy's DOP853 instead.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from . import kernels
from .analysis import ErrorBudget, error_budget, fidelity, gap_analytic
from .core import (
    AlgebraError,
    HilbertSpec,
    QOperator,
    QuantumState,
    annihilation,
    atom_operator,
    collective_spin_ops,
    embed,
    top_level_population,
)
from .model import (
    ANGULAR,
    ATOMIC,
    DetuningWarning,
    E,
    FIELD,
    G,
    R,
    S,
    ParameterError,
    PhysicalParams,
    ThresholdError,
    _atom_sum,
    _proj,
    build_eliminated_hamiltonian,
    build_full_hamiltonian,
    build_spin_hamiltonian,
    build_transformed_hamiltonian,
    build_two_mode_hamiltonian,
    derive_couplings,
    dicke_embedding,
    full_space,
    ground_vacuum,
    spin_space,
    squeezed_vacuum,
    squeezed_vacuum_amplitudes,
    target_state,
    two_mode_space,
)

LINEAR, SINE_SQUARED, TANH = "linear", "sine_squared", "tanh"
SHAPES = (LINEAR, SINE_SQUARED, TANH)
PIECEWISE, ADAPTIVE = "piecewise", "adaptive"


class EvolutionError(RuntimeError):
    pass


@dataclass(frozen=True)
class Schedule:
    t_total: float
    omega2_max: float
    shape: str = SINE_SQUARED
    steepness: float = 4.0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ParameterError(f"unknown schedule shape {self.shape!r}")
        if not self.t_total > 0:
            raise ParameterError("t_total must be positive")
        if not self.omega2_max >= 0:
            raise ParameterError("omega2_max must be non-negative")
        if self.shape == TANH and not self.steepness > 0:
            raise ParameterError("steepness must be positive")


def ramp_value(schedule: Schedule, t: float) -> float:
    """Omega_2(t): monotone from 0 at t=0 to omega2_max at t=T."""
    T = schedule.t_total
    if t < -1e-12 * T or t > T * (1 + 1e-12):
        raise ValueError(f"t = {t} outside [0, {T}]")
    x = min(max(t / T, 0.0), 1.0)
    if schedule.shape == LINEAR:
        f = x
    elif schedule.shape == SINE_SQUARED:
        f = math.sin(0.5 * math.pi * x) ** 2
    else:
        s = schedule.steepness
        th = math.tanh(s)
        f = (math.tanh(s * (2 * x - 1)) + th) / (2 * th)
    return schedule.omega2_max * f


@dataclass(frozen=True)
class EvolveConfig:
    n_steps: int = 2000
    method: str = PIECEWISE
    rel_tol: float = 1e-9
    abs_tol: float = 1e-11
    record_every: int = 20
    truncation_tol: float = 1e-6
    keep_states: bool = False
    dense_threshold: int = 256
    backend: Optional[str] = None

    def __post_init__(self):
        if self.n_steps < 10:
            raise ParameterError("n_steps must be at least 10")
        if self.method not in (PIECEWISE, ADAPTIVE):
            raise ParameterError(f"unknown method {self.method!r}")
        for name in ("rel_tol", "abs_tol", "truncation_tol"):
            v = getattr(self, name)
            if not 0 < v <= 1e-2:
                raise ParameterError(f"{name} must lie in (0, 1e-2]")
        if self.record_every < 1:
            raise ParameterError("record_every must be positive")


@dataclass
class TimeSeries:
    times: np.ndarray
    n_a: np.ndarray
    n_b: np.ndarray
    fidelity: np.ndarray
    gap: np.ndarray
    trunc_top: np.ndarray
    norm_or_trace: np.ndarray
    min_eig: Optional[np.ndarray] = None
    states: Optional[list] = None
    valid: bool = True
    breach_time: Optional[float] = None
    breach_reason: str = ""

    CSV_HEADER = "t_us,n_a,n_b,fidelity,gap_kHz,trunc_top,norm_or_trace"

    def rows(self):
        for i in range(len(self.times)):
            yield (self.times[i], self.n_a[i], self.n_b[i], self.fidelity[i],
                   self.gap[i], self.trunc_top[i], self.norm_or_trace[i])


@dataclass(frozen=True)
class CollapseSet:
    channels: Tuple[Tuple[QOperator, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        for _, rate in self.channels:
            if rate < 0:
                raise ParameterError("collapse rates must be non-negative")

    def scaled_jumps(self):
        """Jump matrices multiplied by sqrt(rate in rad/us)."""
        return [
            math.sqrt(rate * ANGULAR) * sp.csr_matrix(op.matrix)
            for op, rate in self.channels if rate > 0
        ]


@dataclass
class Monitors:
    """Observables recorded along a run. All callables take time in us."""

    n_a: Optional[QOperator] = None
    n_b: Optional[QOperator] = None
    target_of_t: Optional[Callable[[float], np.ndarray]] = None
    gap_of_t: Optional[Callable[[float], float]] = None


class RampedHamiltonian:
    """``H(t) = sum_k f_k(Omega_2(t)) H_k`` with sparse constant matrices ``H_k``."""

    def __init__(self, schedule: Schedule, terms):
        self.schedule = schedule
        self.terms = [(f, kernels.as_csr(m)) for f, m in terms]

    @classmethod
    def from_builder(cls, builder: Callable[[float], QOperator], schedule: Schedule):
        """Exact decomposition of a builder that is quadratic in Omega_2."""
        s = max(schedule.omega2_max, 1.0) / 2.0
        with warnings.catch_warnings():
            # probe points may lie beyond omega2_max; that is not a user-facing condition
            warnings.simplefilter("ignore", DetuningWarning)
            h0 = builder(0.0).matrix
            h1 = builder(s).matrix
            h2 = builder(2 * s).matrix
        quad = (h2 - 2 * h1 + h0) / (2 * s * s)
        lin = (h1 - h0) / s - s * quad
        scale = max(np.max(np.abs(h0)), np.max(np.abs(h2)), 1e-300)
        for m in (lin, quad):
            m[np.abs(m) * s < 1e-13 * scale] = 0.0
        return cls(schedule, [
            (lambda x: 1.0, h0), (lambda x: x, lin), (lambda x: x * x, quad),
        ])

    def at_omega2(self, x: float):
        out = None
        for f, m in self.terms:
            c = f(x)
            if c == 0:
                continue
            out = m * c if out is None else out + m * c
        if out is None:
            out = self.terms[0][1] * 0.0
        return out

    def __call__(self, t: float):
        return self.at_omega2(ramp_value(self.schedule, t))


def _as_sparse(H):
    if isinstance(H, QOperator):
        return sp.csr_matrix(H.matrix)
    if sp.issparse(H):
        return H.tocsr()
    return sp.csr_matrix(np.asarray(H, dtype=complex))


def _as_dense(H):
    if isinstance(H, QOperator):
        return H.matrix
    if sp.issparse(H):
        return H.toarray()
    return np.asarray(H, dtype=complex)


def _record_times(schedule, config):
    dt = schedule.t_total / config.n_steps
    steps = np.arange(0, config.n_steps + 1, config.record_every)
    return steps, np.minimum(steps * dt, schedule.t_total)


class _Recorder:
    def __init__(self, space, n_records, monitors, config, density):
        self.space = space
        self.m = monitors or Monitors()
        self.config = config
        self.density = density
        self.times = np.zeros(n_records)
        self.n_a = np.full(n_records, np.nan)
        self.n_b = np.full(n_records, np.nan)
        self.fid = np.full(n_records, np.nan)
        self.gap = np.full(n_records, np.nan)
        self.trunc = np.zeros(n_records)
        self.norm = np.zeros(n_records)
        self.min_eig = np.zeros(n_records) if density else None
        self.states = [] if config.keep_states else None
        self.valid = True
        self.breach_time = None
        self.reason = ""
        self.i = 0
        na = self.m.n_a.matrix if self.m.n_a is not None else None
        nb = self.m.n_b.matrix if self.m.n_b is not None else None
        self._na = sp.csr_matrix(na) if na is not None else None
        self._nb = sp.csr_matrix(nb) if nb is not None else None

    def _expect(self, op, x):
        if self.density:
            return float(np.real((op @ x).trace()))
        return float(np.real(np.vdot(x, op @ x)))

    def _breach(self, t, reason):
        if self.valid:
            self.valid = False
            self.breach_time = t
            self.reason = reason

    def record(self, t, x):
        i = self.i
        self.times[i] = t
        if self._na is not None:
            self.n_a[i] = self._expect(self._na, x)
        if self._nb is not None:
            self.n_b[i] = self._expect(self._nb, x)
        if self.m.target_of_t is not None:
            tgt = self.m.target_of_t(t)
            if self.density:
                self.fid[i] = float(np.real(np.vdot(tgt, x @ tgt)))
            else:
                self.fid[i] = float(abs(np.vdot(tgt, x)) ** 2)
        if self.m.gap_of_t is not None:
            self.gap[i] = self.m.gap_of_t(t)
        self.trunc[i] = top_level_population(x, self.space)
        if self.trunc[i] > self.config.truncation_tol:
            self._breach(t, f"truncation: top-level population {self.trunc[i]:.3e}")
        if self.density:
            self.norm[i] = float(np.real(np.trace(x)))
            herm = float(np.max(np.abs(x - x.conj().T)))
            self.min_eig[i] = float(np.linalg.eigvalsh(0.5 * (x + x.conj().T)).min())
            if abs(self.norm[i] - 1) > 1e-7 or herm > 1e-9:
                self._breach(t, "trace/hermiticity drift")
            if self.min_eig[i] < -1e-6:
                self._breach(t, f"positivity: min eigenvalue {self.min_eig[i]:.3e}")
        else:
            self.norm[i] = float(np.linalg.norm(x))
            if abs(self.norm[i] - 1) > 1e-8:
                self._breach(t, "norm drift")
        if self.states is not None:
            self.states.append(np.array(x, copy=True))
        self.i += 1

    def result(self):
        return TimeSeries(
            times=self.times, n_a=self.n_a, n_b=self.n_b, fidelity=self.fid, gap=self.gap,
            trunc_top=self.trunc, norm_or_trace=self.norm, min_eig=self.min_eig,
            states=self.states, valid=self.valid, breach_time=self.breach_time,
            breach_reason=self.reason,
        )


def _check_ket(psi0: QuantumState):
    if not psi0.is_ket:
        raise AlgebraError("evolve_unitary needs a ket")


def evolve_unitary(H_of_t, psi0: QuantumState, schedule: Schedule, config: EvolveConfig = EvolveConfig(),
                   monitors: Optional[Monitors] = None) -> Tuple[TimeSeries, QuantumState]:
    """Schroedinger evolution ``i d psi/dt = H(t) psi`` over ``[0, T]``.

    ``H_of_t`` maps time (us) to a Hermitian matrix in 2pi kHz (QOperator,
    ndarray or scipy sparse). Returns the time series and the final ket.
    """
    _check_ket(psi0)
    steps, rec_t = _record_times(schedule, config)
    rec = _Recorder(psi0.space, len(steps), monitors, config, density=False)
    psi = np.array(psi0.data, dtype=complex)
    dim = psi.size
    dt = schedule.t_total / config.n_steps
    if config.method == ADAPTIVE:
        def rhs(t, y):
            return -1j * ANGULAR * (_as_sparse(H_of_t(t)) @ y)

        sol = solve_ivp(rhs, (0.0, schedule.t_total), psi, method="DOP853", t_eval=rec_t,
                        rtol=config.rel_tol, atol=config.abs_tol)
        if not sol.success:
            raise EvolutionError(sol.message)
        for j, t in enumerate(rec_t):
            rec.record(t, sol.y[:, j])
        psi = sol.y[:, -1]
    else:
        rec.record(0.0, psi)
        dense = dim <= config.dense_threshold
        for k in range(config.n_steps):
            H = H_of_t((k + 0.5) * dt)
            if dense:
                w, v = np.linalg.eigh(_as_dense(H))
                psi = v @ (np.exp(-1j * ANGULAR * dt * w) * (v.conj().T @ psi))
            else:
                psi = kernels.expmv_hermitian(_as_sparse(H), psi, ANGULAR * dt, backend=config.backend)
            if (k + 1) % config.record_every == 0:
                rec.record((k + 1) * dt, psi)
    series = rec.result()
    final = QuantumState(psi0.space, psi / np.linalg.norm(psi), "ket")
    return series, final


def evolve_lindblad(H_of_t, collapse: CollapseSet, rho0: QuantumState, schedule: Schedule,
                    config: EvolveConfig = EvolveConfig(), monitors: Optional[Monitors] = None
                    ) -> Tuple[TimeSeries, QuantumState]:
    """Master equation ``d rho/dt = -i[H, rho] + sum_k G_k D[L_k] rho`` (rates in 2pi kHz)."""
    rho = np.array(rho0.to_density().data, dtype=complex)
    steps, rec_t = _record_times(schedule, config)
    rec = _Recorder(rho0.space, len(steps), monitors, config, density=True)
    jumps = collapse.scaled_jumps()
    dt = schedule.t_total / config.n_steps
    if config.method == ADAPTIVE:
        n = rho.shape[0]

        def rhs(t, y):
            L = kernels.Liouvillian(ANGULAR * _as_sparse(H_of_t(t)), jumps)
            return L.apply(y.reshape(n, n)).reshape(-1)

        sol = solve_ivp(rhs, (0.0, schedule.t_total), rho.reshape(-1), method="DOP853", t_eval=rec_t,
                        rtol=config.rel_tol, atol=config.abs_tol)
        if not sol.success:
            raise EvolutionError(sol.message)
        for j, t in enumerate(rec_t):
            x = sol.y[:, j].reshape(n, n)
            rec.record(t, x)
        rho = sol.y[:, -1].reshape(n, n)
    else:
        rec.record(0.0, rho)
        for k in range(config.n_steps):
            H = _as_sparse(H_of_t((k + 0.5) * dt))
            L = kernels.Liouvillian(ANGULAR * H, jumps)
            rho = L.expmv(rho, dt, backend=config.backend)
            if (k + 1) % config.record_every == 0:
                rec.record((k + 1) * dt, rho)
    series = rec.result()
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real
    final = QuantumState(rho0.space, rho, "density")
    return series, final


# ---------------------------------------------------------------- protocols

FULL, SPIN, TWO_MODE, TRANSFORMED = "full", "spin", "two_mode", "transformed"
LEVELS = (FULL, SPIN, TWO_MODE, TRANSFORMED)


@dataclass(frozen=True)
class ModelLevel:
    kind: str = TWO_MODE
    dim_a: int = 8
    dim_b: int = 60
    n_atoms: Optional[int] = None  # overrides params.n_atoms at the full/spin levels
    branch: str = ATOMIC
    keep_residual_stark: bool = False
    eliminated: bool = False  # full level: use the adiabatically eliminated model

    def __post_init__(self):
        if self.kind not in LEVELS:
            raise ParameterError(f"unknown model level {self.kind!r}")
        if self.branch not in (ATOMIC, FIELD):
            raise ParameterError(f"unknown branch {self.branch!r}")
        if self.dim_a < 2 or (self.kind in (TWO_MODE, TRANSFORMED) and self.dim_b < 2):
            raise ParameterError("mode dimensions must be at least 2")


@dataclass
class ProtocolResult:
    final_state: QuantumState
    target: QuantumState
    fidelity_to_target: float
    leakage: float
    time_series: TimeSeries
    error_budget: Optional[ErrorBudget] = None

    @property
    def valid(self) -> bool:
        return self.time_series.valid

    def summary(self) -> dict:
        ts = self.time_series
        gaps = ts.gap[np.isfinite(ts.gap)]
        return {
            "final_fidelity": self.fidelity_to_target,
            "leakage": self.leakage,
            "min_gap_kHz": float(gaps.min()) if gaps.size else float("nan"),
            "final_n_a": float(ts.n_a[-1]),
            "final_n_b": float(ts.n_b[-1]),
            "valid": ts.valid,
        }


def _fock(dim, n=0):
    v = np.zeros(dim, dtype=complex)
    v[n] = 1.0
    return v


def _model_params(params: PhysicalParams, level: ModelLevel) -> PhysicalParams:
    if level.kind in (FULL, SPIN) and level.n_atoms is not None and level.n_atoms != params.n_atoms:
        return params.replace(n_atoms=level.n_atoms)
    return params


def _check_schedule(params: PhysicalParams, schedule: Schedule):
    # lambda2 grows with Omega_2, so the end of the ramp is the worst case
    if not derive_couplings(params, schedule.omega2_max).below_threshold:
        raise ThresholdError("ramp reaches lambda2 >= lambda1: no dark squeezed state")


def _dark_amplitudes(params, omega2, n_levels, branch):
    c = derive_couplings(params, omega2)
    theta = c.theta if branch == ATOMIC else c.theta_field
    v = squeezed_vacuum_amplitudes(c.r, theta, n_levels)
    return v / np.linalg.norm(v)


def _level_setup(params: PhysicalParams, level: ModelLevel, schedule: Schedule):
    """Space, ramped Hamiltonian, number monitors and instantaneous-dark-state function."""
    p = params
    if level.kind == TWO_MODE:
        space = two_mode_space(level.dim_a, level.dim_b)
        ham = RampedHamiltonian.from_builder(
            lambda x: build_two_mode_hamiltonian(p, x, level.dim_a, level.dim_b, level.keep_residual_stark),
            schedule)
        n_a = embed(_number(level.dim_a), space, 0)
        n_b = embed(_number(level.dim_b), space, 1)
        if level.branch == ATOMIC:
            dark = lambda x: np.kron(_fock(level.dim_a), _dark_amplitudes(p, x, level.dim_b, ATOMIC))
        else:
            dark = lambda x: np.kron(_dark_amplitudes(p, x, level.dim_a, FIELD), _fock(level.dim_b))
    elif level.kind == TRANSFORMED:
        space = two_mode_space(level.dim_a, level.dim_b)
        c0 = derive_couplings(p, 0.0)
        h0 = build_transformed_hamiltonian(p, 0.0, level.dim_a, level.dim_b, level.branch)
        a = embed(annihilation(level.dim_a), space, 0)
        b = embed(annihilation(level.dim_b), space, 1)
        bs = np.exp(-1j * p.phi1) * (a @ b.dag)
        unit = -(bs + bs.dag)
        det = h0 + c0.mu * unit
        ham = RampedHamiltonian(schedule, [
            (lambda x: 1.0, det.matrix),
            (lambda x: derive_couplings(p, x).mu, unit.matrix),
        ])
        n_a = embed(_number(level.dim_a), space, 0)
        n_b = embed(_number(level.dim_b), space, 1)
        vac = np.kron(_fock(level.dim_a), _fock(level.dim_b))
        dark = lambda x: vac
    elif level.kind == SPIN:
        N = p.n_atoms
        space = spin_space(level.dim_a, N)
        ham = RampedHamiltonian.from_builder(
            lambda x: build_spin_hamiltonian(p, x, level.dim_a), schedule)
        n_a = embed(_number(level.dim_a), space, 0)
        _, _, sz = collective_spin_ops(N)
        n_b = embed(sz, space, 1) + (N / 2.0) * QOperator(space, np.eye(space.dim))
        dark = lambda x: np.kron(_fock(level.dim_a), _dark_amplitudes(p, x, N + 1, ATOMIC))
    else:
        N = p.n_atoms
        space = full_space(level.dim_a, N)
        builder = build_eliminated_hamiltonian if level.eliminated else build_full_hamiltonian
        ham = RampedHamiltonian.from_builder(lambda x: builder(p, x, level.dim_a), schedule)
        n_a = embed(_number(level.dim_a), space, 0)
        n_b = _atom_sum(space, E, E)
        emb = dicke_embedding(N)
        dark = lambda x: np.kron(_fock(level.dim_a), emb @ _dark_amplitudes(p, x, N + 1, ATOMIC))
    return space, ham, n_a, n_b, dark


def _number(dim):
    a = annihilation(dim)
    return a.dag @ a


def _gap_fn(params, level, schedule):
    c = derive_couplings(params, 0.0)
    delta = c.delta_a if level.branch == ATOMIC else c.delta_b
    degenerate = c.delta_a == 0 and c.delta_b == 0

    def gap(t):
        cc = derive_couplings(params, ramp_value(schedule, t))
        if degenerate and cc.lambda2 > 0:
            return 0.0
        return gap_analytic(cc.mu, delta)
    return gap


def default_collapse(params: PhysicalParams, level: ModelLevel, space: HilbertSpec) -> CollapseSet:
    """Cavity decay on ``a`` at kappa; effective atomic loss at gamma_e on the collective mode.

    ``gamma_e = gamma Omega_2max^2 / (2 Delta_2^2)`` acts as amplitude damping of
    ``b`` (``S-/sqrt(N)`` at the spin level). The full level instead uses
    spontaneous emission ``|g><r|`` and ``|e><s|`` at gamma.
    """
    a = embed(annihilation(space.dims[0]), space, 0)
    gamma_e = params.gamma * params.omega2_rabi_max ** 2 / (2.0 * params.delta2 ** 2)
    if level.kind in (TWO_MODE, TRANSFORMED):
        b = embed(annihilation(space.dims[1]), space, 1)
        return CollapseSet(((a, params.kappa), (b, gamma_e)))
    if level.kind == SPIN:
        _, sm, _ = collective_spin_ops(params.n_atoms)
        lower = embed(sm, space, 1) * (1.0 / math.sqrt(params.n_atoms))
        return CollapseSet(((a, params.kappa), (lower, gamma_e)))
    factor = space.factors[1]
    channels = [(a, params.kappa)]
    for k in range(factor.count):
        for lo, hi in ((G, R), (E, S)):
            local = QOperator(HilbertSpec.of(factor), atom_operator(_proj(lo, hi), factor, k))
            channels.append((embed(local, space, 1), params.gamma))
    return CollapseSet(tuple(channels))


def run_protocol(params: PhysicalParams, schedule: Schedule, config: EvolveConfig = EvolveConfig(),
                 level: ModelLevel = ModelLevel(), open_system: bool = False,
                 collapse: Optional[CollapseSet] = None) -> ProtocolResult:
    """Adiabatic ramp of Omega_2 from the global vacuum / all-ground state."""
    p = _model_params(params, level)
    if schedule.omega2_max != p.omega2_rabi_max:
        p = p.replace(omega2_rabi_max=schedule.omega2_max)
    _check_schedule(p, schedule)
    space, ham, n_a, n_b, dark = _level_setup(p, level, schedule)
    monitors = Monitors(
        n_a=n_a, n_b=n_b,
        target_of_t=lambda t: dark(ramp_value(schedule, t)),
        gap_of_t=_gap_fn(p, level, schedule),
    )
    psi0 = ground_vacuum(space)
    if open_system:
        cs = collapse if collapse is not None else default_collapse(p, level, space)
        series, final = evolve_lindblad(ham, cs, psi0, schedule, config, monitors)
    else:
        series, final = evolve_unitary(ham, psi0, schedule, config, monitors)
    target = _final_target(p, level, schedule, space, dark)
    fid = fidelity(final, target)
    leak = 1.0 - fidelity(final, QuantumState.ket(space, dark(schedule.omega2_max), normalize=True))
    budget = None
    c = derive_couplings(p, 0.0)
    if level.kind in (TWO_MODE, TRANSFORMED) and level.branch == ATOMIC and c.delta_a > 0:
        budget = error_budget(p, schedule.t_total)
    return ProtocolResult(final, target, fid, leak, series, budget)


def _final_target(p, level, schedule, space, dark):
    if level.kind in (TWO_MODE,):
        c = derive_couplings(p, schedule.omega2_max)
        if c.lambda2 == 0:
            return ground_vacuum(space)
        return target_state(p, level.branch, level.dim_a, level.dim_b, schedule.omega2_max,
                            truncation_tol=1.0)
    if level.kind == TRANSFORMED:
        return ground_vacuum(space)
    if level.kind == SPIN:
        c = derive_couplings(p, schedule.omega2_max)
        amps = squeezed_vacuum(c.r, c.theta, p.n_atoms + 1)
        return QuantumState.ket(space, np.kron(_fock(level.dim_a), amps), normalize=True)
    return QuantumState.ket(space, dark(schedule.omega2_max), normalize=True)


def state_transfer_time(params: PhysicalParams) -> float:
    """Half Rabi period of the resonant beam splitter, ``pi / (2 sqrt(N) lambda_1)`` in us."""
    c = derive_couplings(params, 0.0)
    g = math.sqrt(params.n_atoms) * c.lambda1
    if g <= 0:
        raise ParameterError("state transfer needs lambda1 > 0")
    return math.pi / (2.0 * g * ANGULAR)


def transfer_phase_map(vec_b: np.ndarray, phi1: float) -> np.ndarray:
    """Cavity amplitudes produced from collective-mode amplitudes: ``c_n -> c_n (i e^{i phi1})^n``."""
    n = np.arange(vec_b.size)
    return vec_b * (1j * np.exp(1j * phi1)) ** n


def run_state_transfer(params: PhysicalParams, config: EvolveConfig, input_state_b,
                       dim_a: Optional[int] = None) -> ProtocolResult:
    """Map the collective-mode state onto the cavity with the resonant beam splitter.

    ``input_state_b`` is a single-mode ket (array or QuantumState on one boson).
    Detunings are set to resonance and Omega_2 = 0.
    """
    vec_b = np.asarray(getattr(input_state_b, "data", input_state_b), dtype=complex)
    if vec_b.ndim != 1:
        raise AlgebraError("input state must be a ket")
    vec_b = vec_b / np.linalg.norm(vec_b)
    dim_b = vec_b.size
    dim_a = dim_b if dim_a is None else dim_a
    p = params.replace(omega2_rabi_max=0.0, two_photon_offset=0.0).with_delta_a(0.0)
    t_star = state_transfer_time(p)
    schedule = Schedule(t_total=t_star, omega2_max=0.0, shape=LINEAR)
    space = two_mode_space(dim_a, dim_b)
    H = sp.csr_matrix(build_two_mode_hamiltonian(p, 0.0, dim_a, dim_b).matrix)
    expected_a = transfer_phase_map(np.pad(vec_b, (0, max(0, dim_a - dim_b)))[:dim_a], p.phi1)
    target = QuantumState.ket(space, np.kron(expected_a, _fock(dim_b)), normalize=True)
    monitors = Monitors(
        n_a=embed(_number(dim_a), space, 0),
        n_b=embed(_number(dim_b), space, 1),
        target_of_t=lambda t: target.data,
    )
    psi0 = QuantumState.ket(space, np.kron(_fock(dim_a), vec_b))
    series, final = evolve_unitary(lambda t: H, psi0, schedule, config, monitors)
    fid = fidelity(final, target)
    return ProtocolResult(final, target, fid, 1.0 - fid, series, None)


def reduced_mode_state(state: QuantumState, mode: int) -> np.ndarray:
    """Reduced density matrix of one factor of a two-factor state."""
    da, db = state.space.dims
    if state.is_ket:
        psi = state.data.reshape(da, db)
        return psi @ psi.conj().T if mode == 0 else psi.T @ psi.conj()
    rho = state.data.reshape(da, db, da, db)
    return np.einsum("ijkj->ik", rho) if mode == 0 else np.einsum("ijil->jl", rho)
