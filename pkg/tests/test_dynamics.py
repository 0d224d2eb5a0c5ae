import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from darksqueeze.core import Boson, HilbertSpec, QOperator, QuantumState, annihilation, embed
from darksqueeze.dynamics import (
    ADAPTIVE,
    LINEAR,
    SINE_SQUARED,
    TANH,
    CollapseSet,
    EvolveConfig,
    ModelLevel,
    Monitors,
    RampedHamiltonian,
    Schedule,
    default_collapse,
    evolve_lindblad,
    evolve_unitary,
    ramp_value,
    reduced_mode_state,
    run_protocol,
    run_state_transfer,
    state_transfer_time,
    transfer_phase_map,
)
from darksqueeze.model import (
    ANGULAR,
    ParameterError,
    ThresholdError,
    build_two_mode_hamiltonian,
    two_mode_space,
)

SHAPE_LIST = [LINEAR, SINE_SQUARED, TANH]


def number(space, mode):
    a = embed(annihilation(space.dims[mode]), space, mode)
    return a.dag @ a


def beam_splitter(mu, dim=3):
    space = two_mode_space(dim, dim)
    a = embed(annihilation(dim), space, 0)
    b = embed(annihilation(dim), space, 1)
    bs = a @ b.dag
    return space, -mu * (bs + bs.dag)


class TestSchedule:
    @pytest.mark.parametrize("shape", SHAPE_LIST)
    def test_endpoints(self, shape):
        s = Schedule(10.0, 400.0, shape)
        assert ramp_value(s, 0.0) == 0.0
        tol = 1e-12 * 400 if shape != TANH else 400 * math.exp(-2 * s.steepness)
        assert ramp_value(s, 10.0) == pytest.approx(400.0, abs=tol)

    def test_sine_squared_midpoint(self):
        assert ramp_value(Schedule(8.0, 300.0), 4.0) == pytest.approx(150.0)

    def test_linear(self):
        assert ramp_value(Schedule(8.0, 300.0, LINEAR), 2.0) == pytest.approx(75.0)

    @settings(max_examples=30, deadline=None)
    @given(st.sampled_from(SHAPE_LIST), st.floats(min_value=0.5, max_value=8.0),
           st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=2, max_size=20))
    def test_monotone(self, shape, steep, xs):
        s = Schedule(5.0, 100.0, shape, steep)
        vals = [ramp_value(s, 5.0 * x) for x in sorted(xs)]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_out_of_range(self):
        s = Schedule(1.0, 1.0)
        with pytest.raises(ValueError):
            ramp_value(s, 1.5)
        with pytest.raises(ValueError):
            ramp_value(s, -0.1)

    @pytest.mark.parametrize("kwargs", [
        dict(t_total=0.0, omega2_max=1.0),
        dict(t_total=1.0, omega2_max=-1.0),
        dict(t_total=1.0, omega2_max=1.0, shape="cubic"),
        dict(t_total=1.0, omega2_max=1.0, shape=TANH, steepness=0.0),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ParameterError):
            Schedule(**kwargs)


class TestEvolveConfig:
    @pytest.mark.parametrize("kwargs", [
        dict(n_steps=5), dict(method="euler"), dict(rel_tol=0.1), dict(abs_tol=0.0),
        dict(truncation_tol=1.0), dict(record_every=0),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ParameterError):
            EvolveConfig(**kwargs)


class TestUnitary:
    def test_zero_hamiltonian(self):
        space = two_mode_space(4, 4)
        amps = np.zeros((4, 4), dtype=complex)
        amps[:2, :2] = [[1, 2j], [3, -1]]
        psi0 = QuantumState.ket(space, amps.ravel(), normalize=True)
        zero = QOperator(space, np.zeros((16, 16)))
        ts, final = evolve_unitary(lambda t: zero, psi0, Schedule(5.0, 0.0), EvolveConfig(n_steps=20, record_every=5))
        np.testing.assert_allclose(final.data, psi0.data, atol=1e-14)
        assert ts.valid

    @pytest.mark.parametrize("dense_threshold", [10_000, 1])
    def test_beam_splitter_rabi(self, dense_threshold, backend):
        mu = 50.0
        space, H = beam_splitter(mu)
        psi0 = QuantumState.basis(space, [1, 0])
        T = 30.0
        cfg = EvolveConfig(n_steps=200, record_every=10, dense_threshold=dense_threshold, backend=backend)
        ts, _ = evolve_unitary(lambda t: H, psi0, Schedule(T, 0.0), cfg, Monitors(n_a=number(space, 0)))
        expected = np.cos(mu * ANGULAR * ts.times) ** 2
        np.testing.assert_allclose(ts.n_a, expected, atol=1e-9)
        assert np.max(np.abs(ts.norm_or_trace - 1)) < 1e-8

    def test_record_count_and_times(self):
        space, H = beam_splitter(1.0)
        psi0 = QuantumState.basis(space, [1, 0])
        for n, k in [(100, 7), (100, 10), (37, 37), (50, 1)]:
            ts, _ = evolve_unitary(lambda t: H, psi0, Schedule(2.0, 0.0), EvolveConfig(n_steps=n, record_every=k))
            assert len(ts.times) == 1 + n // k
            assert np.all(np.diff(ts.times) > 0)

    def test_adaptive_matches_piecewise(self, bench):
        p = bench
        sched = Schedule(10.0, p.omega2_rabi_max, SINE_SQUARED)
        ham = RampedHamiltonian.from_builder(lambda x: build_two_mode_hamiltonian(p, x, 3, 8), sched)
        psi0 = QuantumState.basis(two_mode_space(3, 8), [0, 0])
        _, f1 = evolve_unitary(ham, psi0, sched, EvolveConfig(n_steps=2000, record_every=100))
        _, f2 = evolve_unitary(ham, psi0, sched, EvolveConfig(n_steps=2000, record_every=100, method=ADAPTIVE,
                                                             rel_tol=1e-10, abs_tol=1e-12))
        assert abs(np.vdot(f1.data, f2.data)) ** 2 == pytest.approx(1.0, abs=1e-7)

    def test_ramped_decomposition_exact(self, bench):
        sched = Schedule(10.0, bench.omega2_rabi_max)
        ham = RampedHamiltonian.from_builder(lambda x: build_two_mode_hamiltonian(bench, x, 3, 4), sched)
        for x in (0.0, 1234.5, bench.omega2_rabi_max):
            direct = build_two_mode_hamiltonian(bench, x, 3, 4).matrix
            np.testing.assert_allclose(ham.at_omega2(x).toarray(), direct, atol=1e-9 * np.max(np.abs(direct)))

    def test_truncation_breach_marks_invalid(self):
        space, H = beam_splitter(50.0, dim=2)
        psi0 = QuantumState.basis(space, [1, 0])
        ts, _ = evolve_unitary(lambda t: H, psi0, Schedule(5.0, 0.0), EvolveConfig(n_steps=50, record_every=5))
        assert not ts.valid
        assert ts.breach_time is not None and "truncation" in ts.breach_reason

    def test_rejects_density(self):
        space = HilbertSpec.of(Boson(2))
        rho = QuantumState.basis(space, [0]).to_density()
        with pytest.raises(Exception):
            evolve_unitary(lambda t: np.zeros((2, 2)), rho, Schedule(1.0, 0.0), EvolveConfig(n_steps=10))


class TestLindblad:
    def test_cavity_decay(self, backend):
        kappa = 10.0
        space = HilbertSpec.of(Boson(4))
        a = annihilation(4)
        rho0 = QuantumState.basis(space, [1]).to_density()
        zero = QOperator(space, np.zeros((4, 4)))
        cfg = EvolveConfig(n_steps=100, record_every=10, backend=backend)
        ts, final = evolve_lindblad(lambda t: zero, CollapseSet([(a, kappa)]), rho0, Schedule(30.0, 0.0), cfg,
                                    Monitors(n_a=a.dag @ a))
        np.testing.assert_allclose(ts.n_a, np.exp(-kappa * ANGULAR * ts.times), atol=1e-9)
        assert ts.valid
        assert np.max(np.abs(ts.norm_or_trace - 1)) < 1e-7
        assert np.min(ts.min_eig) > -1e-6

    def test_adaptive_cavity_decay(self):
        kappa = 10.0
        space = HilbertSpec.of(Boson(4))
        a = annihilation(4)
        rho0 = QuantumState.basis(space, [1]).to_density()
        zero = QOperator(space, np.zeros((4, 4)))
        cfg = EvolveConfig(n_steps=100, record_every=10, method=ADAPTIVE)
        ts, _ = evolve_lindblad(lambda t: zero, CollapseSet([(a, kappa)]), rho0, Schedule(30.0, 0.0), cfg,
                                Monitors(n_a=a.dag @ a))
        np.testing.assert_allclose(ts.n_a, np.exp(-kappa * ANGULAR * ts.times), atol=1e-7)

    def test_closed_limit_matches_unitary(self, bench):
        p = bench.replace(kappa=0.0, gamma=0.0)
        sched = Schedule(10.0, p.omega2_rabi_max)
        level = ModelLevel(dim_a=3, dim_b=8)
        cfg = EvolveConfig(n_steps=200, record_every=20, truncation_tol=1e-2)
        closed = run_protocol(p, sched, cfg, level)
        opened = run_protocol(p, sched, cfg, level, open_system=True)
        assert opened.fidelity_to_target == pytest.approx(closed.fidelity_to_target, abs=1e-6)

    def test_negative_rate_rejected(self):
        with pytest.raises(ParameterError):
            CollapseSet([(annihilation(2), -1.0)])

    def test_default_collapse_rates(self, bench):
        space = two_mode_space(3, 3)
        cs = default_collapse(bench, ModelLevel(dim_a=3, dim_b=3), space)
        rates = [r for _, r in cs.channels]
        assert rates == pytest.approx([25.0, 0.048])


class TestProtocol:
    def test_no_ramp_is_stationary(self, bench):
        p = bench.replace(omega2_rabi_max=0.0)
        res = run_protocol(p, Schedule(10.0, 0.0), EvolveConfig(n_steps=20, record_every=5),
                           ModelLevel(dim_a=3, dim_b=3))
        assert res.fidelity_to_target == pytest.approx(1.0, abs=1e-12)
        assert res.leakage == pytest.approx(0.0, abs=1e-12)

    def test_above_threshold_rejected(self, bench):
        with pytest.raises(ThresholdError):
            run_protocol(bench, Schedule(10.0, 6000.0), EvolveConfig(n_steps=20), ModelLevel(dim_a=3, dim_b=3))

    def test_summary_keys(self, bench):
        res = run_protocol(bench, Schedule(5.0, 1000.0), EvolveConfig(n_steps=20, record_every=10),
                           ModelLevel(dim_a=3, dim_b=6))
        s = res.summary()
        assert set(s) == {"final_fidelity", "leakage", "min_gap_kHz", "final_n_a", "final_n_b", "valid"}
        assert res.error_budget is not None

    @pytest.mark.slow
    def test_integrator_convergence(self, bench):
        T = 10 / (50 * ANGULAR)
        sched = Schedule(T, bench.omega2_rabi_max)
        level = ModelLevel(dim_a=6, dim_b=60)
        f1 = run_protocol(bench, sched, EvolveConfig(n_steps=1000, record_every=100), level).fidelity_to_target
        f2 = run_protocol(bench, sched, EvolveConfig(n_steps=2000, record_every=100), level).fidelity_to_target
        assert abs(f1 - f2) < 1e-6

    def test_spin_level_small(self, bench):
        p = bench.replace(n_atoms=40, omega2_rabi_max=2000.0)
        p = p.replace(omega1_rabi=p.omega1_rabi * math.sqrt(1e6 / 40))
        res = run_protocol(p, Schedule(31.83, 2000.0), EvolveConfig(n_steps=300, record_every=30),
                           ModelLevel("spin", dim_a=4))
        assert res.valid
        assert res.fidelity_to_target > 0.9


class TestStateTransfer:
    def test_time(self, bench):
        assert state_transfer_time(bench) == pytest.approx(math.pi / (2 * 250 * ANGULAR))

    def test_vacuum(self, bench):
        res = run_state_transfer(bench, EvolveConfig(n_steps=50, record_every=10), np.eye(4)[0])
        assert res.fidelity_to_target == pytest.approx(1.0, abs=1e-12)

    def test_single_photon(self, bench, backend):
        res = run_state_transfer(bench, EvolveConfig(n_steps=100, record_every=10, backend=backend), np.eye(4)[1])
        assert res.time_series.n_a[-1] == pytest.approx(1.0, abs=1e-6)
        assert res.fidelity_to_target == pytest.approx(1.0, abs=1e-6)
        assert res.time_series.times[-1] == pytest.approx(state_transfer_time(bench))

    def test_phase_map_and_reduced_state(self, bench):
        rng = np.random.default_rng(5)
        v = rng.normal(size=4) + 1j * rng.normal(size=4)
        v /= np.linalg.norm(v)
        res = run_state_transfer(bench.replace(phi1=0.4), EvolveConfig(n_steps=200, record_every=20), v)
        rho_a = reduced_mode_state(res.final_state, 0)
        w = transfer_phase_map(v, 0.4)
        assert np.vdot(w, rho_a @ w).real == pytest.approx(1.0, abs=1e-8)
        rho_b = reduced_mode_state(res.final_state, 1)
        assert rho_b[0, 0].real == pytest.approx(1.0, abs=1e-8)
