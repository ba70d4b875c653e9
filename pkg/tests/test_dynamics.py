import math
import warnings

import numpy as np
import pytest
import scipy.linalg
import scipy.stats

from cavsqueeze.analysis import tmsv_state_vector
from cavsqueeze.dynamics import (
    ArrivalProcess,
    Trajectory,
    b_mode_jump_operator,
    collision_step,
    evolve_time_dependent,
    evolve_time_independent,
    lindblad_evolve,
    propagate_state,
    run_collision_ensemble,
    run_collision_model,
)
from cavsqueeze.hilbert import (
    DensityMatrix,
    Operator,
    SpaceDescriptor,
    annihilation_op,
    basis_state,
    expectation,
    number_op,
)
from cavsqueeze.model import (
    DerivedParams,
    PhysicalParams,
    StarkShifts,
    b_mode_annihilation,
    build_effective_hamiltonian,
    build_full_hamiltonian,
    build_selective_hamiltonian,
    build_squeeze_operator,
    derive_rates,
)


def channel_b1_rates(theta1=0.5, theta2=0.3, gamma=0.0):
    r = theta2 / theta1
    return DerivedParams(
        theta1=theta1,
        theta2=theta2,
        r=r,
        epsilon=math.atanh(r),
        theta_b=(theta1 + theta2) * math.sqrt((1.0 - r) / (1.0 + r)),
        gamma=gamma,
        channel="b1",
    )


def channel_b2_rates(theta1=0.3, theta2=0.5, gamma=0.0):
    r = theta1 / theta2
    return DerivedParams(
        theta1=theta1,
        theta2=theta2,
        r=r,
        epsilon=math.atanh(r),
        theta_b=(theta1 + theta2) * math.sqrt((1.0 - r) / (1.0 + r)),
        gamma=gamma,
        channel="b2",
    )


def transformed_vacuum(field_space, epsilon):
    # exp applied to the truncated generator is exactly unitary, so the
    # conjugated lowering operators annihilate this vector to machine precision
    squeeze = build_squeeze_operator(field_space, epsilon)
    return squeeze.dagger().matrix @ basis_state(field_space, 0, 0, 0)


def transformed_fock1(field_space, epsilon, mode):
    vac = transformed_vacuum(field_space, epsilon)
    raised = b_mode_annihilation(field_space, epsilon, mode).dagger().matrix @ vac
    return raised / np.linalg.norm(raised)


def collision_params(theta1=1.0, theta2=0.3, r_a=0.0, tau=0.0):
    # omega = g = sqrt(theta) with unit detunings keeps the two-photon rates exact
    return PhysicalParams(
        omega1=math.sqrt(theta1),
        omega2=math.sqrt(theta2),
        g1=math.sqrt(theta1),
        g2=math.sqrt(theta2),
        delta1=-1.0,
        delta2=1.0,
        gamma_e=0.0,
        r_a=r_a,
        tau=tau,
    )


class TestTrajectory:
    def test_rejects_decreasing_times(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            Trajectory(times=np.array([0.0, 1.0, 1.0]), records={})

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            Trajectory(times=np.array([0.0, 1.0]), records={"n": np.array([1.0])})

    def test_csv_round_trip(self, tmp_path):
        times = np.array([0.0, 0.1, 0.2])
        records = {"n_b1": np.array([1.0, 1.0 / 3.0, 0.123456789012345678]),
                   "duan_sum": np.array([0.5, 0.25, 0.125])}
        traj = Trajectory(times=times, records=records)
        path = tmp_path / "traj.csv"
        traj.to_csv(path)
        text = path.read_text()
        lines = text.splitlines()
        assert lines[0] == "t,n_b1,duan_sum"
        assert len(lines) == 4
        data = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
        np.testing.assert_array_equal(data[:, 0], times)
        np.testing.assert_array_equal(data[:, 1], records["n_b1"])
        np.testing.assert_array_equal(data[:, 2], records["duan_sum"])


class TestArrivalProcess:
    def test_rejects_negative_rate(self):
        with pytest.raises(ValueError, match="nonnegative"):
            ArrivalProcess(rate=-1.0, seed=0)

    def test_rejects_unknown_policy(self):
        with pytest.raises(ValueError, match="policy"):
            ArrivalProcess(rate=1.0, seed=0, policy="queue")

    def test_zero_rate_no_arrivals(self):
        assert ArrivalProcess(rate=0.0, seed=3).sample(10.0).size == 0

    def test_samples_sorted_and_bounded(self):
        times = ArrivalProcess(rate=5.0, seed=11).sample(20.0)
        assert times.size > 0
        assert np.all(np.diff(times) > 0)
        assert times[0] >= 0.0 and times[-1] < 20.0

    def test_seeded_reproducibility(self):
        a = ArrivalProcess(rate=2.0, seed=42).sample(50.0)
        b = ArrivalProcess(rate=2.0, seed=42).sample(50.0)
        c = ArrivalProcess(rate=2.0, seed=43).sample(50.0)
        np.testing.assert_array_equal(a, b)
        assert a.size != c.size or not np.array_equal(a, c)

    def test_interarrivals_are_exponential(self):
        # Kolmogorov-Smirnov on ~1e4 gaps at the 1% level
        rate = 3.0
        times = ArrivalProcess(rate=rate, seed=7).sample(10_000.0 / rate)
        gaps = np.diff(times, prepend=0.0)
        assert gaps.size > 9000
        result = scipy.stats.kstest(gaps, "expon", args=(0.0, 1.0 / rate))
        assert result.pvalue > 0.01


class TestEvolveTimeIndependent:
    def test_rejects_non_hermitian(self):
        s = SpaceDescriptor(1, 3, 1)
        h = Operator(s, np.triu(np.ones((s.dim, s.dim))))
        rho = DensityMatrix.from_state_vector(s, basis_state(s, 0, 0, 0))
        with pytest.raises(ValueError, match="Hermitian"):
            evolve_time_independent(h, rho, 0.1)

    def test_rejects_space_mismatch(self):
        s = SpaceDescriptor(1, 3, 1)
        other = SpaceDescriptor(1, 4, 1)
        h = Operator(s, np.zeros((s.dim, s.dim)))
        rho = DensityMatrix.from_state_vector(other, basis_state(other, 0, 0, 0))
        with pytest.raises(ValueError, match="space"):
            evolve_time_independent(h, rho, 0.1)

    def test_preserves_trace_and_purity(self):
        s = SpaceDescriptor(2, 8, 8)
        d = channel_b2_rates()
        h = build_selective_hamiltonian(d, None, s)
        rho = DensityMatrix.from_state_vector(s, basis_state(s, "g", 1, 0))
        out = evolve_time_independent(h, rho, 0.7)
        assert abs(np.trace(out.matrix) - 1.0) < 1e-9
        purity = np.trace(out.matrix @ out.matrix).real
        assert abs(purity - 1.0) < 1e-9

    def test_flip_oscillation_between_dressed_levels(self):
        # the single-channel Hamiltonian couples exactly two dressed states:
        # atom g with no transformed quanta, and atom h with one quantum in
        # transformed mode 2.  Population returns with period pi/theta_b.
        s = SpaceDescriptor(2, 8, 8)
        sf = SpaceDescriptor(1, 8, 8)
        d = channel_b2_rates()
        h = build_selective_hamiltonian(d, None, s)
        vac = transformed_vacuum(sf, d.epsilon)
        one = transformed_fock1(sf, d.epsilon, 2)
        start = np.kron(np.array([1.0, 0.0]), vac)
        target = np.kron(np.array([0.0, 1.0]), one)
        rho = DensityMatrix.from_state_vector(s, start)

        half = evolve_time_independent(h, rho, math.pi / (2.0 * d.theta_b))
        transfer = np.vdot(target, half.matrix @ target).real
        assert abs(transfer - 1.0) < 1e-9

        full = evolve_time_independent(h, rho, math.pi / d.theta_b)
        back = np.vdot(start, full.matrix @ start).real
        assert abs(back - 1.0) < 1e-9

    def test_zero_time_is_identity(self):
        s = SpaceDescriptor(1, 3, 1)
        h = Operator(s, np.diag(np.arange(s.dim, dtype=float)))
        rho = DensityMatrix.from_state_vector(s, basis_state(s, 0, 1, 0))
        out = evolve_time_independent(h, rho, 0.0)
        np.testing.assert_array_equal(out.matrix, rho.matrix)


class TestEvolveTimeDependent:
    def setup_method(self):
        self.s = SpaceDescriptor(1, 4, 2)
        rng = np.random.default_rng(5)
        m = rng.normal(size=(self.s.dim, self.s.dim)) + 1j * rng.normal(size=(self.s.dim, self.s.dim))
        self.h0 = 0.5 * (m + m.conj().T)
        v = rng.normal(size=(self.s.dim, self.s.dim)) + 1j * rng.normal(size=(self.s.dim, self.s.dim))
        self.v = 0.5 * (v + v.conj().T)
        psi = rng.normal(size=self.s.dim) + 1j * rng.normal(size=self.s.dim)
        self.rho = DensityMatrix.from_state_vector(self.s, psi / np.linalg.norm(psi))

    def h_of_t(self, t):
        return Operator(self.s, self.h0 + math.cos(3.0 * t) * self.v)

    def test_matches_time_independent_for_constant_h(self):
        h = Operator(self.s, self.h0)
        ref = evolve_time_independent(h, self.rho, 0.9)
        out = evolve_time_dependent(lambda t: h, self.rho, (0.0, 0.9), dt=0.05)
        assert np.max(np.abs(out.matrix - ref.matrix)) < 1e-7

    def test_fourth_order_convergence(self):
        n = number_op(self.s, 1)
        ref = evolve_time_dependent(self.h_of_t, self.rho, (0.0, 1.0), dt=1e-3)
        ref_n = expectation(n, ref).real
        coarse = evolve_time_dependent(self.h_of_t, self.rho, (0.0, 1.0), dt=0.08)
        fine = evolve_time_dependent(self.h_of_t, self.rho, (0.0, 1.0), dt=0.04)
        err_coarse = abs(expectation(n, coarse).real - ref_n)
        err_fine = abs(expectation(n, fine).real - ref_n)
        assert err_coarse / err_fine > 8.0

    def test_halving_dt_is_converged(self):
        n = number_op(self.s, 1)
        a = evolve_time_dependent(self.h_of_t, self.rho, (0.0, 1.0), dt=0.01)
        b = evolve_time_dependent(self.h_of_t, self.rho, (0.0, 1.0), dt=0.005)
        assert abs(expectation(n, a).real - expectation(n, b).real) < 1e-5

    def test_step_size_precondition(self):
        with pytest.raises(ValueError, match="need dt <="):
            evolve_time_dependent(self.h_of_t, self.rho, (0.0, 1.0), dt=0.01, max_frequency=100.0)

    def test_trace_preserved(self):
        out = evolve_time_dependent(self.h_of_t, self.rho, (0.0, 2.0), dt=0.02)
        assert abs(np.trace(out.matrix).real - 1.0) < 1e-9


class TestPropagateState:
    def test_matches_exponential_for_constant_h(self):
        s = SpaceDescriptor(1, 5, 1)
        rng = np.random.default_rng(9)
        m = rng.normal(size=(s.dim, s.dim)) + 1j * rng.normal(size=(s.dim, s.dim))
        hm = 0.5 * (m + m.conj().T)
        psi0 = basis_state(s, 0, 2, 0)
        out = propagate_state(Operator(s, hm), psi0, (0.0, 1.2), dt=1e-3)
        ref = scipy.linalg.expm(-1j * 1.2 * hm) @ psi0
        overlap = abs(np.vdot(ref, out))
        assert abs(overlap - 1.0) < 1e-7
        assert abs(np.linalg.norm(out) - 1.0) < 1e-12

    def test_time_dependent_phase(self):
        # H(t) = f(t) n with f(t) = cos(t): exactly solvable, psi picks up
        # phase exp(-i n sin(t)) on each Fock level
        s = SpaceDescriptor(1, 4, 1)
        n = number_op(s, 1).matrix
        psi0 = (basis_state(s, 0, 0, 0) + basis_state(s, 0, 3, 0)) / math.sqrt(2.0)
        out = propagate_state(lambda t: math.cos(t) * n, psi0, (0.0, 2.0), dt=1e-3)
        ref = (basis_state(s, 0, 0, 0) + np.exp(-3j * math.sin(2.0)) * basis_state(s, 0, 3, 0)) / math.sqrt(2.0)
        assert abs(abs(np.vdot(ref, out)) - 1.0) < 1e-8

    def test_full_model_reduces_to_dispersive(self):
        # the oscillating three-level model and the dispersive two-level one
        # must agree as propagators, not just per matrix element; the
        # sign-flipped dispersive Hamiltonian is far off, which pins the
        # e^{-i delta t} phase convention against the +omega^2/delta shifts
        p = PhysicalParams(omega1=0.15, omega2=0.25, g1=0.15, g2=0.25,
                           delta1=-3.0, delta2=5.0)
        s = SpaceDescriptor(3, 4, 4)
        psi0 = basis_state(s, s.atom_index("h"), 0, 0)
        h_eff = build_effective_hamiltonian(p, s).matrix
        t_end = 50.0
        psi_full = propagate_state(
            lambda t: build_full_hamiltonian(p, s, t).matrix,
            psi0, (0.0, t_end), dt=0.01,
        )
        good = abs(np.vdot(scipy.linalg.expm(-1j * t_end * h_eff) @ psi0, psi_full)) ** 2
        flipped = abs(np.vdot(scipy.linalg.expm(1j * t_end * h_eff) @ psi0, psi_full)) ** 2
        assert good > 0.995
        assert flipped < 0.7


class TestBModeJumpOperator:
    def test_requires_field_only_space(self):
        with pytest.raises(ValueError, match="field-only"):
            b_mode_jump_operator(SpaceDescriptor(2, 4, 4), 0.3, 1)

    def test_zero_squeezing_is_bare_annihilation(self):
        s = SpaceDescriptor(1, 5, 5)
        b = b_mode_jump_operator(s, 0.0, 1)
        np.testing.assert_allclose(b.matrix, annihilation_op(s, 1).matrix, atol=1e-14)

    def test_annihilates_squeezed_vacuum(self):
        s = SpaceDescriptor(1, 25, 25)
        target = tmsv_state_vector(s, 0.5)
        for mode in (1, 2):
            b = b_mode_jump_operator(s, 0.5, mode)
            assert np.linalg.norm(b.matrix @ target) < 1e-5

    def test_interior_commutator(self):
        s = SpaceDescriptor(1, 25, 25)
        b = b_mode_jump_operator(s, 0.5, 1).matrix
        comm = b @ b.conj().T - b.conj().T @ b
        idx = [s.index(0, n1, n2) for n1 in range(4) for n2 in range(4)]
        sub = comm[np.ix_(idx, idx)]
        np.testing.assert_allclose(sub, np.eye(len(idx)), atol=1e-6)


class TestCollisionStep:
    def setup_method(self):
        self.d = channel_b1_rates()
        self.sf = SpaceDescriptor(1, 8, 8)
        self.sc = SpaceDescriptor(2, 8, 8)
        self.h_int = build_selective_hamiltonian(self.d, None, self.sc)
        self.vac = transformed_vacuum(self.sf, self.d.epsilon)

    def test_rejects_composite_cavity_state(self):
        rho = DensityMatrix.from_state_vector(self.sc, basis_state(self.sc, "g", 0, 0))
        with pytest.raises(ValueError, match="field-only"):
            collision_step(rho, "g", self.h_int, 0.1)

    def test_rejects_truncation_mismatch(self):
        small = SpaceDescriptor(1, 4, 4)
        rho = DensityMatrix.from_state_vector(small, basis_state(small, 0, 0, 0))
        with pytest.raises(ValueError, match="truncation"):
            collision_step(rho, "g", self.h_int, 0.1)

    def test_rejects_unknown_atom_label(self):
        rho = DensityMatrix.from_state_vector(self.sf, self.vac)
        with pytest.raises(ValueError):
            collision_step(rho, "e", self.h_int, 0.1)

    def test_coupling_rate_guard(self):
        rho = DensityMatrix.from_state_vector(self.sf, self.vac)
        with pytest.raises(ValueError, match="perturbative"):
            collision_step(rho, "g", self.h_int, 0.1, coupling_rate=5.0)
        with pytest.warns(UserWarning, match="large"):
            collision_step(rho, "g", self.h_int, 0.1, coupling_rate=3.0)

    def test_zero_tau_is_identity(self):
        rho = DensityMatrix.from_state_vector(self.sf, transformed_fock1(self.sf, self.d.epsilon, 1))
        out = collision_step(rho, "g", self.h_int, 0.0)
        assert np.max(np.abs(out.matrix - rho.matrix)) < 1e-12

    def test_single_collision_extraction(self):
        # one transformed quantum plus a ground atom is an exact two-level
        # system: the occupation drops by sin^2(theta_b tau)
        tau = 0.15 / self.d.theta_b
        rho = DensityMatrix.from_state_vector(self.sf, transformed_fock1(self.sf, self.d.epsilon, 1))
        n_b1 = b_mode_annihilation(self.sf, self.d.epsilon, 1)
        n_b1 = (n_b1.dagger() @ n_b1).matrix
        before = expectation(n_b1, rho).real
        out = collision_step(rho, "g", self.h_int, tau, coupling_rate=self.d.theta_b)
        after = expectation(n_b1, out).real
        drop = before - after
        assert abs(drop - math.sin(0.15) ** 2) < 1e-9

    def test_dark_state_is_unchanged(self):
        rho = DensityMatrix.from_state_vector(self.sf, self.vac)
        out = collision_step(rho, "g", self.h_int, 0.4 / self.d.theta_b)
        assert np.max(np.abs(out.matrix - rho.matrix)) < 1e-10

    def test_dark_state_with_light_shifts(self):
        stark = StarkShifts(shift_g=0.7, shift_h=0.4, per_photon_1=0.05, per_photon_2=0.03)
        h_full = build_selective_hamiltonian(self.d, stark, self.sc)
        rho = DensityMatrix.from_state_vector(self.sf, self.vac)
        out = collision_step(rho, "g", h_full, 0.4 / self.d.theta_b)
        assert np.max(np.abs(out.matrix - rho.matrix)) < 1e-10

    def test_propagator_reuse(self):
        tau = 0.1
        u = scipy.linalg.expm(-1j * tau * self.h_int.matrix)
        rho = DensityMatrix.from_state_vector(self.sf, transformed_fock1(self.sf, self.d.epsilon, 1))
        a = collision_step(rho, "g", self.h_int, tau)
        b = collision_step(rho, "g", self.h_int, tau, propagator=u)
        np.testing.assert_allclose(a.matrix, b.matrix, atol=1e-14)


class TestRunCollisionModel:
    def setup_method(self):
        self.sf = SpaceDescriptor(1, 8, 8)
        self.d = derive_rates(collision_params(tau=1.0))

    def params_for(self, theta_b_tau, r_a_tau):
        tau = theta_b_tau / self.d.theta_b
        return collision_params(r_a=r_a_tau / tau, tau=tau)

    def initial_state(self, params):
        eps = derive_rates(params).epsilon
        return DensityMatrix.from_state_vector(self.sf, transformed_fock1(self.sf, eps, 1))

    def test_rejects_fast_arrivals(self):
        p = self.params_for(0.1, 0.5)
        rho = self.initial_state(p)
        proc = ArrivalProcess(rate=p.r_a, seed=0)
        with pytest.raises(ValueError, match="one-atom"):
            run_collision_model(rho, p, 1.0, proc)

    def test_rejects_long_transit(self):
        p = self.params_for(0.6, 0.1)
        rho = self.initial_state(p)
        proc = ArrivalProcess(rate=p.r_a, seed=0)
        with pytest.raises(ValueError, match="perturbative"):
            run_collision_model(rho, p, 1.0, proc)

    def test_rejects_composite_state(self):
        p = self.params_for(0.1, 0.1)
        sc = SpaceDescriptor(2, 4, 4)
        rho = DensityMatrix.from_state_vector(sc, basis_state(sc, "g", 0, 0))
        proc = ArrivalProcess(rate=p.r_a, seed=0)
        with pytest.raises(ValueError, match="field-only"):
            run_collision_model(rho, p, 1.0, proc)

    def test_zero_rate_constant_trajectory(self):
        p = self.params_for(0.1, 0.1)
        rho = self.initial_state(p)
        proc = ArrivalProcess(rate=0.0, seed=0)
        traj = run_collision_model(rho, p, 1.0, proc, sample_times=np.linspace(0.0, 1.0, 5))
        for series in traj.records.values():
            np.testing.assert_allclose(series, series[0], atol=1e-12)
        assert np.max(np.abs(traj.final_state.matrix - rho.matrix)) < 1e-12
        assert traj.diagnostics["accepted_arrivals"] == 0

    def test_occupation_decays(self):
        p = self.params_for(0.1, 0.1)
        rho = self.initial_state(p)
        d = derive_rates(p)
        duration = 1.5 / d.gamma
        proc = ArrivalProcess(rate=p.r_a, seed=2)
        traj = run_collision_model(rho, p, duration, proc)
        n_b1 = traj.records["n_b1"]
        assert abs(n_b1[0] - 1.0) < 1e-9
        assert n_b1[-1] < 0.5
        assert traj.diagnostics["accepted_arrivals"] > 0
        assert traj.diagnostics["channel"] == "b1"
        assert traj.diagnostics["atom_state"] == "g"

    def test_records_have_uniform_keys(self):
        p = self.params_for(0.1, 0.1)
        rho = self.initial_state(p)
        proc = ArrivalProcess(rate=p.r_a, seed=4)
        traj = run_collision_model(rho, p, 0.5 / derive_rates(p).gamma, proc)
        expected = {"n_a1", "n_a2", "n_b1", "n_b2",
                    "v_x_minus", "v_x_plus", "v_p_minus", "v_p_plus", "duan_sum"}
        assert set(traj.records) == expected
        for series in traj.records.values():
            assert series.shape == traj.times.shape

    def test_seeded_determinism(self):
        p = self.params_for(0.1, 0.1)
        rho = self.initial_state(p)
        duration = 0.5 / derive_rates(p).gamma
        a = run_collision_model(rho, p, duration, ArrivalProcess(rate=p.r_a, seed=12))
        b = run_collision_model(rho, p, duration, ArrivalProcess(rate=p.r_a, seed=12))
        c = run_collision_model(rho, p, duration, ArrivalProcess(rate=p.r_a, seed=13))
        for key in a.records:
            np.testing.assert_array_equal(a.records[key], b.records[key])
        np.testing.assert_array_equal(a.final_state.matrix, b.final_state.matrix)
        assert any(not np.array_equal(a.records[k], c.records[k]) for k in a.records)

    def test_drop_policy_counts(self):
        p = self.params_for(0.05, 0.19)
        rho = self.initial_state(p)
        duration = 300.0 * p.tau
        proc = ArrivalProcess(rate=p.r_a, seed=6)
        traj = run_collision_model(rho, p, duration, proc)
        raw = proc.sample(duration).size
        assert traj.diagnostics["accepted_arrivals"] + traj.diagnostics["dropped_arrivals"] == raw
        assert traj.diagnostics["dropped_arrivals"] > 0

    def test_truncation_overflow_raises(self):
        p = self.params_for(0.1, 0.1)
        small = SpaceDescriptor(1, 3, 3)
        rho = DensityMatrix.from_state_vector(small, basis_state(small, 0, 2, 2))
        proc = ArrivalProcess(rate=p.r_a, seed=0)
        with pytest.raises(RuntimeError, match="truncation overflow"):
            run_collision_model(rho, p, 1.0, proc)

    def test_dark_state_fixed_point_with_stark(self):
        p = self.params_for(0.1, 0.1)
        eps = derive_rates(p).epsilon
        rho = DensityMatrix.from_state_vector(self.sf, transformed_vacuum(self.sf, eps))
        duration = 50.0 * p.tau
        traj = run_collision_model(rho, p, duration, ArrivalProcess(rate=p.r_a, seed=8),
                                   include_stark=True)
        assert np.max(np.abs(traj.final_state.matrix - rho.matrix)) < 1e-9


class TestRunCollisionEnsemble:
    def setup_method(self):
        self.sf = SpaceDescriptor(1, 8, 8)
        base = derive_rates(collision_params(tau=1.0))
        tau = 0.1 / base.theta_b
        self.p = collision_params(r_a=0.1 / tau, tau=tau)
        eps = derive_rates(self.p).epsilon
        self.rho = DensityMatrix.from_state_vector(self.sf, transformed_fock1(self.sf, eps, 1))
        self.duration = 0.4 / derive_rates(self.p).gamma
        self.samples = np.linspace(0.0, self.duration, 9)

    def test_matches_manual_average(self):
        ens = run_collision_ensemble(self.rho, self.p, self.duration, 2, 100,
                                     sample_times=self.samples, workers=1)
        singles = [
            run_collision_model(self.rho, self.p, self.duration,
                                ArrivalProcess(rate=self.p.r_a, seed=100 ^ i),
                                sample_times=self.samples)
            for i in range(2)
        ]
        for key in ens.records:
            manual = np.mean([s.records[key] for s in singles], axis=0)
            np.testing.assert_array_equal(ens.records[key], manual)

    def test_worker_count_independence(self):
        a = run_collision_ensemble(self.rho, self.p, self.duration, 4, 7,
                                   sample_times=self.samples, workers=1)
        b = run_collision_ensemble(self.rho, self.p, self.duration, 4, 7,
                                   sample_times=self.samples, workers=3)
        for key in a.records:
            np.testing.assert_array_equal(a.records[key], b.records[key])
        np.testing.assert_array_equal(a.final_state.matrix, b.final_state.matrix)

    def test_rejects_empty_ensemble(self):
        with pytest.raises(ValueError, match="at least 1"):
            run_collision_ensemble(self.rho, self.p, self.duration, 0, 0)


class TestLindbladEvolve:
    def test_damped_cavity_occupation(self):
        s = SpaceDescriptor(1, 8, 1)
        gamma = 1.3
        rho0 = DensityMatrix.from_state_vector(s, basis_state(s, 0, 3, 0))
        n = number_op(s, 1)
        times = np.linspace(0.0, 2.0, 9)
        traj = lindblad_evolve(
            rho0, [(annihilation_op(s, 1), gamma)], (0.0, 2.0),
            record=lambda rho: {"n": expectation(n, rho).real},
            sample_times=times,
        )
        expected = 3.0 * np.exp(-gamma * times)
        np.testing.assert_allclose(traj.records["n"], expected, atol=1e-5)

    def test_transformed_mode_pumping(self):
        # the jump b1 empties transformed mode 1 exponentially
        s = SpaceDescriptor(1, 8, 8)
        eps = 0.3
        gamma = 0.8
        rho0 = DensityMatrix.from_state_vector(s, transformed_fock1(s, eps, 1))
        b = b_mode_jump_operator(s, eps, 1)
        n_b = b.dagger() @ b
        times = np.linspace(0.0, 2.5, 6)
        traj = lindblad_evolve(
            rho0, [(b, gamma)], (0.0, 2.5),
            record=lambda rho: {"n_b1": expectation(n_b, rho).real},
            sample_times=times,
        )
        np.testing.assert_allclose(traj.records["n_b1"], np.exp(-gamma * times), atol=1e-5)

    def test_step_size_violation(self):
        s = SpaceDescriptor(1, 4, 1)
        rho0 = DensityMatrix.from_state_vector(s, basis_state(s, 0, 1, 0))
        with pytest.raises(ValueError, match="step-size violation"):
            lindblad_evolve(rho0, [(annihilation_op(s, 1), 10.0)], (0.0, 1.0), dt=0.1)

    def test_rejects_negative_rate(self):
        s = SpaceDescriptor(1, 4, 1)
        rho0 = DensityMatrix.from_state_vector(s, basis_state(s, 0, 1, 0))
        with pytest.raises(ValueError, match="nonnegative"):
            lindblad_evolve(rho0, [(annihilation_op(s, 1), -1.0)], (0.0, 1.0))

    def test_rejects_space_mismatch(self):
        s = SpaceDescriptor(1, 4, 1)
        other = SpaceDescriptor(1, 5, 1)
        rho0 = DensityMatrix.from_state_vector(s, basis_state(s, 0, 1, 0))
        with pytest.raises(ValueError, match="space"):
            lindblad_evolve(rho0, [(annihilation_op(other, 1), 1.0)], (0.0, 1.0))

    def test_pure_hamiltonian_matches_unitary(self):
        s = SpaceDescriptor(2, 8, 8)
        d = channel_b1_rates()
        h = build_selective_hamiltonian(d, None, s)
        rho0 = DensityMatrix.from_state_vector(s, basis_state(s, "g", 1, 1))
        ref = evolve_time_independent(h, rho0, 1.1)
        traj = lindblad_evolve(rho0, [], (0.0, 1.1), hamiltonian=h)
        assert np.max(np.abs(traj.final_state.matrix - ref.matrix)) < 1e-7

    def test_diagnostics_and_positivity(self):
        s = SpaceDescriptor(1, 6, 1)
        rho0 = DensityMatrix.from_state_vector(s, basis_state(s, 0, 2, 0))
        traj = lindblad_evolve(rho0, [(annihilation_op(s, 1), 1.0)], (0.0, 1.0))
        assert traj.diagnostics["steps"] > 0
        assert traj.diagnostics["min_population"] > -1e-8
        assert abs(np.trace(traj.final_state.matrix).real - 1.0) < 1e-12

    def test_empty_records_without_recorder(self):
        s = SpaceDescriptor(1, 4, 1)
        rho0 = DensityMatrix.from_state_vector(s, basis_state(s, 0, 1, 0))
        traj = lindblad_evolve(rho0, [(annihilation_op(s, 1), 1.0)], (0.0, 0.5))
        assert traj.records == {}
        assert traj.final_state is not None
