import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from solgate.dynamics import (IntegrationError, NoiseConfig, NotSettledError, Trajectory,
                              equilibrium_time, integrate_ode, integrate_sde,
                              integrate_sde_ensemble, integrate_until_settled, run_rng,
                              solve_ode, solve_sde)
from solgate.model import REFERENCE_POINT, CircuitParams, GateSpec, State, flow_vector


def decay(y):
    return -y


def decay_jac(y):
    return -np.eye(len(y))


class TestSolveOde:
    @pytest.mark.parametrize("method", ["rk45", "rosenbrock"])
    def test_exponential_decay(self, method):
        t, y, _ = solve_ode(decay, [1.0], 1.0, jac=decay_jac, method=method, rel_tol=1e-8,
                            abs_tol=1e-12, record_dt=0.1)
        assert y[-1, 0] == pytest.approx(math.exp(-1), rel=1e-6)
        np.testing.assert_allclose(y[:, 0], np.exp(-t), rtol=1e-6)

    def test_fixed_step_rosenbrock_second_order(self):
        errs = []
        for dt in (0.02, 0.01):
            _, y, _ = solve_ode(decay, [1.0], 1.0, jac=decay_jac, method="rosenbrock", dt=dt)
            errs.append(abs(y[-1, 0] - math.exp(-1)))
        assert 3.0 < errs[0] / errs[1] < 5.0

    def test_stiff_linear_system(self):
        a = np.array([[-1e6, 0.0], [1.0, -1.0]])
        t, y, info = solve_ode(lambda y: a @ y, [1.0, 1.0], 10.0, jac=lambda y: a,
                               method="rosenbrock", rel_tol=1e-6, abs_tol=1e-9)
        # an explicit method would need more than 10 * 1e6 / 3.3 steps
        assert info["steps"] < 20_000
        exact = math.exp(-10) * (1 + 1 / (1e6 - 1))
        assert y[-1, 1] == pytest.approx(exact, rel=1e-4)

    def test_bad_tolerances(self):
        with pytest.raises(ValueError):
            solve_ode(decay, [1.0], 1.0, rel_tol=1e-2)
        with pytest.raises(ValueError):
            solve_ode(decay, [1.0], 1.0, rel_tol=1e-13)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            solve_ode(decay, [1.0], 1.0, method="euler")

    def test_nonfinite_state(self):
        with pytest.raises(IntegrationError):
            solve_ode(lambda y: y**2, [1.0], 2.0, method="rk45")

    def test_step_budget(self):
        with pytest.raises(IntegrationError):
            solve_ode(lambda y: -1e8 * y, [1.0], 1.0, method="rk45", max_steps=100)


class TestIntegrateOde:
    @pytest.mark.parametrize("method", ["rk45", "rosenbrock"])
    def test_constant_at_critical_point(self, and_gate, params, method):
        s0 = State.from_vector(1.0, REFERENCE_POINT)
        traj = integrate_ode(and_gate, params, s0, 0.01, method=method)
        np.testing.assert_allclose(traj.states, np.tile(REFERENCE_POINT, (len(traj), 1)),
                                   atol=1e-10)

    def test_reaches_logic_high(self, and_run):
        np.testing.assert_allclose(and_run.trajectory.states[-1, :2], [1.0, 1.0], atol=1e-3)

    def test_metadata_and_grid(self, and_gate, params, start_state):
        traj = integrate_ode(and_gate, params, start_state, 2e-3, record_dt=5e-4)
        np.testing.assert_allclose(traj.times, [0, 5e-4, 1e-3, 1.5e-3, 2e-3])
        assert traj.metadata["integrator"] == "rk45"
        assert traj.times[0] == 0.0

    @pytest.mark.parametrize("tau", [1e-5, 1e-6, 1e-7])
    def test_step_halving(self, and_gate, params, start_state, tau):
        a = integrate_ode(and_gate, params, start_state, 0.05, rel_tol=tau, abs_tol=tau / 100)
        b = integrate_ode(and_gate, params, start_state, 0.05, rel_tol=tau / 10,
                          abs_tol=tau / 1000)
        assert np.max(np.abs(a.states[-1] - b.states[-1])) <= 10 * tau

    def test_memristor_states_stay_in_box(self, and_run):
        x = and_run.trajectory.x
        assert x.min() >= -1e-9 and x.max() <= 1 + 1e-9

    def test_until_settled_extends_horizon(self, and_gate, params):
        s0 = State.from_vector(1.0, REFERENCE_POINT + np.r_[1e-3, 0, 0, 0, 0, 0, 0])
        traj = integrate_until_settled(and_gate, params, s0, 0.05, settle_tol=1e-6,
                                       method="rosenbrock")
        assert traj.times[-1] > 0.05
        assert np.max(np.abs(flow_vector(and_gate, params, traj.states[-1], 1.0))) <= 1e-6
        assert np.all(np.diff(traj.times) > 0)

    def test_until_settled_gives_up(self, and_gate, params, start_state):
        with pytest.raises(NotSettledError):
            integrate_until_settled(and_gate, params, start_state, 1e-3, settle_tol=1e-12,
                                    max_t_end=4e-3)


class TestTrajectory:
    def test_rejects_non_increasing_times(self):
        with pytest.raises(ValueError):
            Trajectory([0.0, 0.0], np.zeros((2, 7)), 1.0)

    def test_truncated(self, and_run):
        t = and_run.trajectory.truncated(1e-3)
        assert t.times[-1] <= 1e-3 and len(t) == 11


class TestEquilibriumTime:
    def test_constant(self):
        traj = Trajectory(np.linspace(0, 1, 11), np.ones((11, 7)), 1.0)
        assert equilibrium_time(traj) == 0.0

    def test_exponential_approach(self):
        dt = 1e-3
        t = np.arange(0, 20 + dt / 2, dt)
        states = np.zeros((len(t), 7))
        states[:, 0] = states[:, 1] = 1 + np.exp(-t)
        # the 1% band around ~1 is crossed at ln(100)
        assert equilibrium_time(Trajectory(t, states, 1.0)) == pytest.approx(math.log(100),
                                                                             abs=dt)

    def test_not_settled(self, and_gate, params, and_run):
        short = and_run.trajectory.truncated(2e-3)
        with pytest.raises(NotSettledError):
            equilibrium_time(short, gate=and_gate, params=params)

    def test_reference_run(self, and_gate, params, and_run):
        t_eq = equilibrium_time(and_run.trajectory, gate=and_gate, params=params)
        assert 0 < t_eq < and_run.trajectory.times[-1]


class TestStochastic:
    def test_noise_config_validation(self):
        with pytest.raises(ValueError):
            NoiseConfig(-1.0)
        with pytest.raises(ValueError):
            NoiseConfig(1.0, dt=0.0)

    def test_ornstein_uhlenbeck_variance(self):
        theta, gamma, dt = 1.0, 0.5, 0.01
        m = 1000
        y0 = np.zeros((m, 1))
        rngs = [run_rng(7, i) for i in range(m)]
        _, states, _ = solve_sde(lambda y: -theta * y,
                                 lambda y: np.broadcast_to(-theta * np.eye(1), y.shape + (1,)),
                                 y0, 1010.0, dt, np.array([math.sqrt(gamma)]), rngs,
                                 record_dt=1.0)
        samples = states[:, 10:, 0]
        assert samples.size >= 1_000_000
        assert samples.var() == pytest.approx(gamma / (2 * theta), rel=0.05)

    def test_zero_noise_matches_ode(self, and_gate, params, start_state):
        ref = integrate_ode(and_gate, params, start_state, 5e-3, rel_tol=1e-10, abs_tol=1e-12)
        errs = []
        for dt in (1e-6, 5e-7):
            traj = integrate_sde(and_gate, params, start_state, 5e-3, NoiseConfig(0.0, dt=dt))
            errs.append(np.max(np.abs(traj.states - ref.states)))
        assert errs[0] < 1e-3
        # first-order convergence of the drift-implicit step
        assert 1.6 < errs[0] / errs[1] < 2.4

    def test_bit_identical_with_same_seed(self, and_gate, params, start_state):
        cfg = NoiseConfig(100.0, seed=42, n_runs=3)
        a = integrate_sde_ensemble(and_gate, params, start_state, 1e-3, cfg)
        b = integrate_sde_ensemble(and_gate, params, start_state, 1e-3, cfg)
        assert np.array_equal(a.states, b.states)
        c = integrate_sde_ensemble(and_gate, params, start_state, 1e-3,
                                   NoiseConfig(100.0, seed=43, n_runs=3))
        assert not np.array_equal(a.states, c.states)

    def test_runs_independent_of_batch(self, and_gate, params, start_state):
        cfg = NoiseConfig(100.0, seed=5, n_runs=3)
        whole = integrate_sde_ensemble(and_gate, params, start_state, 1e-3, cfg)
        shuffled = integrate_sde_ensemble(and_gate, params, start_state, 1e-3, cfg,
                                          run_indices=[2, 0, 1])
        np.testing.assert_array_equal(shuffled.states[[1, 2, 0]], whole.states)
        single = integrate_sde(and_gate, params, start_state, 1e-3, cfg, run_index=1)
        np.testing.assert_array_equal(single.states, whole.states[1])

    def test_projection_keeps_box(self, and_gate, params, start_state):
        ens = integrate_sde_ensemble(and_gate, params, start_state, 2e-3,
                                     NoiseConfig(400.0, n_runs=4))
        x = ens.states[:, :, 2:]
        assert x.min() >= 0.0 and x.max() <= 1.0
        assert np.all(ens.clamp_fraction > 0)

    def test_clamp_fraction_grows_with_gamma(self, and_gate, params, start_state):
        fracs = [integrate_sde_ensemble(and_gate, params, start_state, 1e-3,
                                        NoiseConfig(g, n_runs=4, seed=3)).clamp_fraction.mean()
                 for g in (0.0, 1.0, 400.0)]
        assert fracs[0] == 0.0
        assert fracs[0] <= fracs[1] <= fracs[2]

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**63 - 1), st.integers(0, 1000))
    def test_run_streams_reproducible(self, seed, index):
        a = run_rng(seed, index).standard_normal(4)
        b = run_rng(seed, index).standard_normal(4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, run_rng(seed, index + 1).standard_normal(4))
