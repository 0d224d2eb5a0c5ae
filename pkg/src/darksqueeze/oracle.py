"""Cross-level validation: exact vs eliminated dynamics, spin vs bosonic
models, and numeric checks of the squeezing transformation.

Thresholds used by the comparisons were measured on the reference parameter
sets below and frozen with a 2x safety factor; they are regression bounds, not
analytic error bounds.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from .analysis import fidelity, gap_analytic, gap_numeric
from .core import QOperator, QuantumState, annihilation, embed
from .dynamics import (
    FULL,
    SPIN,
    TWO_MODE,
    EvolveConfig,
    ModelLevel,
    Schedule,
    run_protocol,
)
from .model import (
    ATOMIC,
    R,
    S,
    ParameterError,
    PhysicalParams,
    ThresholdError,
    TruncationError,
    _atom_sum,
    build_transformed_hamiltonian,
    build_two_mode_hamiltonian,
    derive_couplings,
    squeeze_operator,
    squeezed_vacuum,
    two_mode_space,
)

# Elimination oracle: g/e population deviation at Delta/Lambda = 200
# (measured 5.5e-5 on `elimination_reference_params`, frozen at 2x).
ELIMINATION_THRESHOLD = 1.1e-4
# HP oracle: final spin-level fidelity to the HP-mapped target at N = 50.
HP_FIDELITY_THRESHOLD = 0.98
HP_RATIO_BAND = (2.0, 8.0)
MIN_DETUNING_MARGIN = 50.0
BULK_FRACTION = 0.8


@dataclass
class ComparisonReport:
    levels: tuple
    deviations: Dict[str, float]
    thresholds: Dict[str, float]
    bound_estimate: float
    inconclusive: bool = False
    notes: str = ""
    extras: Dict[str, float] = field(default_factory=dict)
    checks: Dict[str, bool] = field(default_factory=dict)

    def __post_init__(self):
        for k, v in self.deviations.items():
            if not v >= 0:
                raise ValueError(f"deviation {k} must be non-negative")

    @property
    def passed(self) -> bool:
        if self.inconclusive:
            return False
        return (all(self.deviations[k] < self.thresholds[k] for k in self.thresholds)
                and all(self.checks.values()))

    def to_json(self) -> str:
        d = asdict(self)
        d["levels"] = list(self.levels)
        d["passed"] = self.passed
        return json.dumps(d, sort_keys=True)


# ---------------------------------------------------------------- elimination

def elimination_reference_params(detuning: float = 4000.0) -> PhysicalParams:
    """Single-atom parameters with Lambda = 20 (2pi kHz); Delta/Lambda = detuning/20."""
    p = PhysicalParams(
        g1=10.0, g2=10.0, omega1_rabi=20.0, omega2_rabi_max=16.0,
        delta1=detuning, delta2=detuning, n_atoms=1,
    )
    return p.with_delta_a(0.05)


def elimination_scale(params: PhysicalParams, cavity_dim: int) -> float:
    """``Lambda = max(g sqrt(n+1), Omega)`` with ``n + 1`` the cavity dimension."""
    return max(params.g1 * math.sqrt(cavity_dim), params.g2 * math.sqrt(cavity_dim),
               params.omega1_rabi, params.omega2_rabi_max)


def compare_full_vs_eliminated(params: PhysicalParams, n_atoms: int, cavity_dim: int,
                               schedule: Schedule, config: EvolveConfig = EvolveConfig(n_steps=400, record_every=4),
                               threshold: float = ELIMINATION_THRESHOLD) -> ComparisonReport:
    """Evolve the four-level model and its eliminated counterpart from the ground state.

    Compares ``<a^dag a>`` and the ``g``/``e`` populations; also checks that the
    full model keeps its excited population below ``10 (Lambda/Delta)^2``.
    """
    if not 1 <= n_atoms <= 2:
        raise ParameterError("full-model oracle supports 1 or 2 atoms")
    p = params.replace(n_atoms=n_atoms)
    lam = elimination_scale(p, cavity_dim)
    delta = min(abs(p.delta1), abs(p.delta2))
    ratio = delta / lam if lam > 0 else math.inf
    bound = 1.0 / ratio if lam > 0 else 0.0
    thresholds = {"ground_population": threshold, "n_a": threshold,
                  "excited_population": 10.0 * bound ** 2}
    if ratio < MIN_DETUNING_MARGIN:
        return ComparisonReport((FULL, "eliminated"), {k: 0.0 for k in thresholds}, thresholds, bound,
                                inconclusive=True, notes=f"Delta/Lambda = {ratio:.1f} below margin")
    cfg = EvolveConfig(**{**config.__dict__, "keep_states": True, "truncation_tol": 1e-2})
    runs = {}
    for eliminated in (False, True):
        level = ModelLevel(kind=FULL, dim_a=cavity_dim, n_atoms=n_atoms, eliminated=eliminated)
        runs[eliminated] = run_protocol(p, schedule, cfg, level)
    space = runs[False].final_state.space
    gg = _atom_sum(space, 0, 0).matrix
    ee = _atom_sum(space, 1, 1).matrix
    exc = (_atom_sum(space, R, R) + _atom_sum(space, S, S)).matrix

    def pops(states, op):
        return np.array([np.vdot(x, op @ x).real for x in states])

    full, elim = runs[False].time_series, runs[True].time_series
    dev_ground = max(np.max(np.abs(pops(full.states, gg) - pops(elim.states, gg))),
                     np.max(np.abs(pops(full.states, ee) - pops(elim.states, ee))))
    deviations = {
        "ground_population": float(dev_ground),
        "n_a": float(np.max(np.abs(full.n_a - elim.n_a))),
        "excited_population": float(np.max(pops(full.states, exc))),
    }
    return ComparisonReport((FULL, "eliminated"), deviations, thresholds, bound,
                            extras={"delta_over_lambda": ratio})


# ---------------------------------------------------------------- HP oracle

def hp_reference_params(n_atoms: int, r: float = 0.55, mu_max: float = 250.0,
                        delta_a: float = 100.0) -> PhysicalParams:
    """Collective-coupling-matched parameters: ``sqrt(N) lambda_1 = mu_max`` for every N.

    Equal couplings and detunings on both transitions cancel the cross-Kerr
    term; the two-photon offset cancels the residual Stark shift at the end
    of the ramp.
    """
    g, detuning = 1.0e4, 1.0e6
    lam1 = mu_max / math.sqrt(n_atoms)
    om1 = lam1 * detuning / g
    om2 = math.tanh(r) * om1
    p = PhysicalParams(g1=g, g2=g, omega1_rabi=om1, omega2_rabi_max=om2,
                       delta1=detuning, delta2=detuning, n_atoms=n_atoms)
    c = derive_couplings(p)
    return p.replace(two_photon_offset=c.eta_e - c.eta_g).with_delta_a(delta_a)


def _predicted_excitation_fraction(params: PhysicalParams) -> float:
    c = derive_couplings(params)
    return math.sinh(c.r) ** 2 / params.n_atoms


def compare_spin_vs_twomode(params_by_n: Sequence[PhysicalParams], dims: tuple, schedule_T: float,
                            config: EvolveConfig = EvolveConfig(n_steps=400, record_every=10),
                            keep_residual_stark: bool = True) -> ComparisonReport:
    """Dicke-level vs two-mode dynamics for two atom numbers (second = 4x first ideally).

    Deviation per N is the largest difference along the run of the collective
    excitation (``<b^dag b>`` vs ``<S_z> + N/2``) and of the fidelity to the
    instantaneous dark state.
    """
    if len(params_by_n) != 2:
        raise ParameterError("compare_spin_vs_twomode needs exactly two parameter sets")
    dim_a, dim_b = dims
    dev_exc, dev_fid, final_fid = [], [], []
    for p in params_by_n:
        if not 20 <= p.n_atoms <= 200:
            raise ParameterError("HP oracle expects 20 <= N <= 200")
        if _predicted_excitation_fraction(p) >= 0.05:
            return ComparisonReport((SPIN, TWO_MODE), {}, {}, 0.0, inconclusive=True,
                                    notes="predicted <b^dag b>/N >= 0.05")
        sch = Schedule(schedule_T, p.omega2_rabi_max)
        spin = run_protocol(p, sch, config, ModelLevel(kind=SPIN, dim_a=dim_a))
        two = run_protocol(p, sch, config, ModelLevel(kind=TWO_MODE, dim_a=dim_a, dim_b=dim_b,
                                                      keep_residual_stark=keep_residual_stark))
        s, t = spin.time_series, two.time_series
        dev_exc.append(float(np.max(np.abs(s.n_b - t.n_b))))
        dev_fid.append(float(np.max(np.abs(s.fidelity - t.fidelity))))
        final_fid.append(spin.fidelity_to_target)
    ratio = dev_exc[0] / dev_exc[1] if dev_exc[1] > 0 else math.inf
    deviations = {
        "excitation_small_n": dev_exc[0], "excitation_large_n": dev_exc[1],
        "fidelity_small_n": dev_fid[0], "fidelity_large_n": dev_fid[1],
        "target_infidelity_small_n": 1.0 - final_fid[0],
    }
    thresholds = {
        "excitation_large_n": dev_exc[0],  # must decrease with N
        "target_infidelity_small_n": 1.0 - HP_FIDELITY_THRESHOLD,
    }
    bound = _predicted_excitation_fraction(params_by_n[0])
    extras = {"deviation_ratio": ratio, "spin_fidelity_small_n": final_fid[0],
              "spin_fidelity_large_n": final_fid[1]}
    lo, hi = HP_RATIO_BAND
    checks = {"deviation_ratio_in_band": bool(lo <= ratio <= hi)}
    return ComparisonReport((SPIN, TWO_MODE), deviations, thresholds, bound, extras=extras,
                            checks=checks, notes=f"keep_residual_stark={keep_residual_stark}")


# ---------------------------------------------------------------- Bogoliubov / dark state

def bulk_indices(dims: Sequence[int], fraction: float = BULK_FRACTION) -> np.ndarray:
    """Flat indices whose level in every factor is below ``fraction`` of its dimension."""
    cuts = [max(1, int(math.floor(fraction * d))) for d in dims]
    grids = np.meshgrid(*[np.arange(c) for c in cuts], indexing="ij")
    return np.ravel_multi_index(tuple(g.ravel() for g in grids), tuple(dims))


def _padding(dim: int, bulk: int, r: float) -> int:
    return max(2 * dim, int(2 * bulk * math.exp(2 * r)) + 100)


def bogoliubov_check(params: PhysicalParams, dims: tuple, theta_offset: float = 0.0,
                     r_scale: float = 1.0, omega2_current: Optional[float] = None) -> float:
    """``max|S^dag H S - H~| / max|H~|`` over the bulk of the two-mode space.

    ``S`` squeezes the collective mode with the atomic-branch ``(r, theta)``;
    it is applied in a padded single-mode space so truncation does not enter
    the bulk matrix elements. ``theta_offset`` / ``r_scale`` perturb the
    squeezing for negative controls.
    """
    dim_a, dim_b = dims
    c = derive_couplings(params, omega2_current)
    if not c.below_threshold:
        raise ThresholdError("lambda2 >= lambda1: transformation undefined")
    r = c.r * r_scale
    theta = c.theta + theta_offset
    bulk_b = int(math.floor(BULK_FRACTION * dim_b))
    P = _padding(dim_b, bulk_b, r)
    Sp = squeeze_operator(r, theta, P).matrix
    bp = annihilation(P).matrix
    B = Sp.conj().T @ bp @ Sp
    Nb = (B.conj().T @ B)[:dim_b, :dim_b]
    Bd = B.conj().T[:dim_b, :dim_b]
    space = two_mode_space(dim_a, dim_b)
    a = annihilation(dim_a).matrix
    ia, ib = np.eye(dim_a), np.eye(dim_b)
    rn = math.sqrt(params.n_atoms)
    coupling = rn * (c.lambda1 * np.exp(-1j * params.phi1) * np.kron(a, Bd)
                     + c.lambda2 * np.exp(1j * params.phi2) * np.kron(a.conj().T, Bd))
    conj = (c.delta_a * np.kron(a.conj().T @ a, ib) + c.delta_b * np.kron(ia, Nb)
            - (coupling + coupling.conj().T))
    om2 = params.omega2_rabi_max if omega2_current is None else omega2_current
    ht = build_transformed_hamiltonian(params, om2, dim_a, dim_b).matrix
    idx = bulk_indices((dim_a, dim_b))
    diff = (conj - ht)[np.ix_(idx, idx)]
    return float(np.max(np.abs(diff)) / max(np.max(np.abs(ht)), 1e-300))


def dark_state_residual(H: QOperator, state: QuantumState, exclude_top: int = 1) -> float:
    """``||H psi|| / max|H|`` with output rows at the top ``exclude_top`` levels of
    each bosonic factor dropped (those rows only see the truncation edge)."""
    if H.space != state.space:
        raise ParameterError("operator and state live on different spaces")
    v = H.matrix @ state.data
    if exclude_top > 0:
        dims = state.space.dims
        keep = np.ones(state.space.dim, dtype=bool)
        levels = np.unravel_index(np.arange(state.space.dim), dims)
        for i in state.space.boson_indices():
            keep &= levels[i] < dims[i] - exclude_top
        v = v[keep]
    return float(np.linalg.norm(v) / max(H.norm_max(), 1e-300))


def atomic_target_residual(params: PhysicalParams, dims: tuple, r_scale: float = 1.0,
                           theta_offset: float = 0.0) -> float:
    """Dark-state residual of the (optionally perturbed) atomic-branch target under the two-mode H."""
    dim_a, dim_b = dims
    c = derive_couplings(params)
    H = build_two_mode_hamiltonian(params, params.omega2_rabi_max, dim_a, dim_b)
    sq = squeezed_vacuum(c.r * r_scale, c.theta + theta_offset, dim_b)
    vec = np.kron(np.eye(dim_a)[0], sq)
    state = QuantumState.ket(H.space, vec, normalize=True)
    return dark_state_residual(H, state)


def gap_check(params: PhysicalParams, dims: tuple = (4, 4), n_points: int = 20,
              seed: int = 0) -> float:
    """Largest relative difference between ``gap_numeric`` and ``gap_analytic``
    over random ``(mu, delta_a)`` with ``mu`` in [1, 500], ``delta_a`` in [0, 500]."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    base = params.replace(omega2_rabi_max=0.0, two_photon_offset=0.0)
    for _ in range(n_points):
        mu = rng.uniform(1.0, 500.0)
        da = rng.uniform(0.0, 500.0)
        # realize mu through lambda1 with lambda2 = 0
        om1 = mu / math.sqrt(base.n_atoms) * base.delta1 / base.g1
        p = base.replace(omega1_rabi=om1).with_delta_a(da)
        H = build_transformed_hamiltonian(p, 0.0, *dims)
        a, b = gap_numeric(H), gap_analytic(mu, da)
        worst = max(worst, abs(a - b) / b)
    return worst


@dataclass
class CheckResult:
    name: str
    value: float
    threshold: float
    passed: bool
    inconclusive: bool = False
    expect_fail: bool = False

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def validation_suite(params: PhysicalParams, level: str = TWO_MODE, negative_controls: bool = False,
                     dims: tuple = (50, 50)) -> list:
    """Oracle checks appropriate to a model level; returns ``CheckResult`` list in fixed order."""
    out = []
    c = derive_couplings(params)
    if level in (TWO_MODE, "transformed") and c.lambda2 > 0 and c.below_threshold:
        res = atomic_target_residual(params, dims)
        out.append(CheckResult("dark_state_residual", res, 1e-6, res < 1e-6))
        res = bogoliubov_check(params, dims)
        out.append(CheckResult("bogoliubov_check", res, 1e-6, res < 1e-6))
        if negative_controls:
            for name, kw in (("neg_r_plus_10pct", {"r_scale": 1.1}), ("neg_theta_plus_0.3", {"theta_offset": 0.3})):
                res = atomic_target_residual(params, dims, **kw)
                out.append(CheckResult(name, res, 1e-3, res > 1e-3, expect_fail=True))
            res = bogoliubov_check(params, dims, theta_offset=math.pi / 2)
            out.append(CheckResult("neg_bogoliubov_theta_plus_pi/2", res, 1e-2, res > 1e-2, expect_fail=True))
    if level == "transformed":
        res = gap_check(params)
        out.append(CheckResult("gap_numeric_vs_analytic", res, 1e-9, res < 1e-9))
    if level in (FULL, "eliminated"):
        p = elimination_reference_params()
        sch = Schedule(1.0e4, p.omega2_rabi_max)
        rep = compare_full_vs_eliminated(p, 1, 4, sch)
        out.append(CheckResult("full_vs_eliminated", rep.deviations["ground_population"],
                               rep.thresholds["ground_population"], rep.passed, rep.inconclusive))
    if level == SPIN:
        rep = compare_spin_vs_twomode([hp_reference_params(50), hp_reference_params(200)], (6, 20), 31.830988618379067)
        out.append(CheckResult("spin_vs_two_mode", rep.deviations.get("excitation_large_n", 0.0),
                               rep.thresholds.get("excitation_large_n", 0.0), rep.passed, rep.inconclusive))
    return out
