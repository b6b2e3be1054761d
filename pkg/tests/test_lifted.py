import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wienerbayes.lifted import (DimensionError, InputTrajectory, LinearDynamics, NoiseModel,
                                build_lifted_blocks, input_sensitivity, propagate_means,
                                propagate_state_stats, repair_psd, stack_dynamics)
from wienerbayes.validation import random_instance


class TestRepairPSD:
    def test_symmetrizes(self):
        S = np.array([[2.0, 1.0], [0.0, 2.0]])
        np.testing.assert_array_equal(repair_psd(S), [[2.0, 0.5], [0.5, 2.0]])

    def test_clips_tiny_negative_eigenvalues(self):
        S = np.diag([1.0, -5e-11])
        out = repair_psd(S)
        assert np.linalg.eigvalsh(out).min() >= 0.0

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError, match="not positive semidefinite"):
            repair_psd(np.diag([1.0, -1e-6]))


class TestLinearDynamics:
    def test_lti_accessors(self):
        dyn = LinearDynamics.lti(np.eye(2), 0.1 * np.eye(2), 5)
        assert dyn.time_invariant and dyn.T == 5 and dyn.n_inputs == 2 + 5 * 2
        np.testing.assert_array_equal(dyn.A(3), np.eye(2))

    def test_ltv_from_sequences(self):
        As = [np.eye(2) * k for k in range(1, 4)]
        Bs = [np.ones((2, 1))] * 3
        dyn = stack_dynamics(As, Bs)
        assert not dyn.time_invariant and dyn.T == 3 and dyn.nu == 1
        np.testing.assert_array_equal(dyn.A(2), 3 * np.eye(2))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            LinearDynamics.lti(np.eye(2), np.ones((3, 1)), 4)
        with pytest.raises(DimensionError):
            LinearDynamics(np.ones((3, 2, 2)), np.ones((2, 2, 1)))


class TestNoiseModel:
    def test_rejects_nonpositive_measurement_variance(self):
        with pytest.raises(ValueError, match="sigma_v_sq"):
            NoiseModel(np.eye(2), np.zeros((1, 2, 2)), [0.1, 0.0])

    def test_check_catches_wrong_length(self):
        dyn = LinearDynamics.lti(np.eye(2), np.eye(2), 3)
        with pytest.raises(DimensionError):
            NoiseModel.isotropic(2, 2, 0.1, 0.1).check(dyn)


class TestInputTrajectory:
    def test_scalar_bounds_leave_initial_mean_free(self):
        u = InputTrajectory.from_blocks([300.0, -300.0], np.zeros((2, 2)), -200, 200)
        assert np.all(np.isinf(u.lower[:2])) and np.all(u.lower[2:] == -200)

    def test_out_of_box_rejected(self):
        with pytest.raises(ValueError, match="outside"):
            InputTrajectory.from_blocks([0.0, 0.0], [[250.0, 0.0]], -200, 200)

    def test_immutable(self):
        u = InputTrajectory.from_blocks([0.0, 0.0], [[1.0, 0.0]])
        with pytest.raises(ValueError):
            u.stacked[0] = 1.0


class TestPropagation:
    def test_zero_horizon(self):
        dyn = LinearDynamics.lti(np.eye(2), np.eye(2), 0)
        S0 = np.array([[0.3, 0.1], [0.1, 0.2]])
        noise = NoiseModel(S0, np.zeros((0, 2, 2)), [0.1])
        st_ = propagate_state_stats(dyn, noise, InputTrajectory.from_blocks([1.0, 2.0], np.zeros((0, 2))))
        np.testing.assert_array_equal(st_.means, [[1.0, 2.0]])
        np.testing.assert_array_equal(st_.covs[0], S0)
        np.testing.assert_array_equal(st_.cross[0, 0], S0)

    def test_identity_flow_without_noise(self):
        T = 7
        dyn = LinearDynamics.lti(np.eye(2), np.zeros((2, 2)), T)
        noise = NoiseModel.isotropic(2, T, 0.0, 0.01)
        u = InputTrajectory.from_blocks([3.2, 2.8], np.ones((T, 2)))
        s = propagate_state_stats(dyn, noise, u)
        np.testing.assert_array_equal(s.means, np.tile([3.2, 2.8], (T + 1, 1)))
        assert not np.any(s.cross)

    def test_cross_symmetry_is_exact(self, instance):
        model, u = instance
        c = model.statistics(u).cross
        np.testing.assert_array_equal(c, np.swapaxes(np.swapaxes(c, 0, 1), 2, 3))

    def test_monte_carlo_covariances(self):
        rng = np.random.default_rng(1)
        model, u = random_instance(rng, 6)
        s = model.statistics(u)
        dyn, noise = model.dynamics, model.noise
        n = 1_000_000
        nx = dyn.nx
        x = s.means[0] + rng.standard_normal((n, nx)) @ np.linalg.cholesky(noise.Sigma_x0).T
        xs = [x]
        ctrl = u.controls(nx, dyn.nu)
        for t in range(dyn.T):
            L = np.linalg.cholesky(noise.Sw(t))
            x = x @ dyn.A(t).T + dyn.B(t) @ ctrl[t] + rng.standard_normal((n, nx)) @ L.T
            xs.append(x)
        X = np.stack(xs, 1) - s.means                 # (n, T+1, nx)
        for t, tp in [(0, 0), (3, 3), (6, 6), (2, 5), (6, 1)]:
            prod = X[:, t, :, None] * X[:, tp, None, :]
            emp = prod.mean(0)
            se = prod.std(0) / np.sqrt(n)
            assert np.all(np.abs(emp - s.cross[t, tp]) < 3.5 * se + 1e-15), (t, tp)


class TestLiftedBlocks:
    def test_zero_horizon_is_identity(self):
        Abar, Bbar = build_lifted_blocks(LinearDynamics.lti(np.eye(3), np.ones((3, 1)), 0))
        np.testing.assert_array_equal(Abar, np.eye(3))
        np.testing.assert_array_equal(Bbar, np.eye(3))

    def test_identity_dynamics_blocks(self):
        Abar, _ = build_lifted_blocks(LinearDynamics.lti(np.eye(2), np.eye(2), 4))
        for t in range(5):
            for k in range(t + 1):
                np.testing.assert_array_equal(Abar[2 * t:2 * t + 2, 2 * k:2 * k + 2], np.eye(2))

    def test_first_moment_matches_recursion(self, rng):
        model, u = random_instance(rng, 3)
        Abar, Bbar = build_lifted_blocks(model.dynamics)
        np.testing.assert_allclose(Abar @ Bbar @ u.stacked, propagate_means(model.dynamics, u).ravel(),
                                   atol=1e-12, rtol=0)

    @pytest.mark.parametrize("T", [0, 1, 4, 8])
    def test_covariance_matches_lifted_products(self, rng, T):
        model, u = random_instance(rng, T)
        Abar, _ = build_lifted_blocks(model.dynamics)
        full = Abar @ model.noise.lifted_covariance(T) @ Abar.T
        c = model.statistics(u).cross
        nx = model.dynamics.nx
        for t in range(T + 1):
            for s in range(T + 1):
                np.testing.assert_allclose(c[t, s], full[t * nx:(t + 1) * nx, s * nx:(s + 1) * nx],
                                           atol=1e-12, rtol=0)

    def test_cap(self):
        with pytest.raises(MemoryError):
            build_lifted_blocks(LinearDynamics.lti(np.eye(2), np.eye(2), 10), cap=8)


class TestSensitivity:
    def test_initial_mean_coordinate_under_identity(self):
        dyn = LinearDynamics.lti(np.eye(2), np.eye(2), 5)
        np.testing.assert_array_equal(input_sensitivity(dyn, 1), np.tile([0.0, 1.0], (6, 1)))

    def test_last_control_is_causal(self, rng):
        model, _ = random_instance(rng, 5)
        dyn = model.dynamics
        i = dyn.n_inputs - 1
        s = input_sensitivity(dyn, i)
        assert not np.any(s[:dyn.T])
        np.testing.assert_array_equal(s[dyn.T], dyn.B(dyn.T - 1)[:, -1])

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            input_sensitivity(LinearDynamics.lti(np.eye(2), np.eye(2), 2), 6)

    def test_finite_difference(self, rng):
        model, u = random_instance(rng, 7)
        dyn = model.dynamics
        h = 1e-6
        for i in range(dyn.n_inputs):
            e = np.zeros(dyn.n_inputs)
            e[i] = h
            fd = (propagate_means(dyn, u.stacked + e) - propagate_means(dyn, u.stacked - e)) / (2 * h)
            s = input_sensitivity(dyn, i)
            assert np.max(np.abs(fd - s)) <= 1e-8 * max(np.max(np.abs(s)), 1.0)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), k=st.integers(0, 5))
    def test_causality(self, seed, k):
        rng = np.random.default_rng(seed)
        model, u = random_instance(rng, 6)
        dyn = model.dynamics
        x = u.stacked.copy()
        x[dyn.nx + k * dyn.nu] += 1.0
        a, b = propagate_means(dyn, u), propagate_means(dyn, x)
        np.testing.assert_array_equal(a[:k + 1], b[:k + 1])
