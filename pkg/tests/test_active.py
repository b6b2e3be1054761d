import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wienerbayes.active import (ErrorObjective, OptimizationError, OptimizeOptions, OptimizerState, adaptive_step,
                                error_gradient, optimize_inputs, project_box)
from wienerbayes.lifted import InputTrajectory, NoiseModel
from wienerbayes.model import WienerModel, robot_input, robot_model
from wienerbayes.validation import finite_difference_gradient, random_instance


class Quadratic:
    """``J(u) = 0.5 u' Q u`` exposing the objective protocol used by the optimizer."""

    def __init__(self, Q):
        self.Q = Q

    def value_and_gradient(self, u):
        x = u.stacked
        return 0.5 * x @ self.Q @ x, self.Q @ x


class TestProjection:
    def test_clamps_to_bound(self):
        assert project_box(np.array([250.0]), -200, 200)[0] == 200.0

    def test_interior_unchanged(self):
        x = np.array([1.0, -3.0, 199.0])
        np.testing.assert_array_equal(project_box(x, -200, 200), x)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20))
    def test_idempotent(self, xs):
        x = np.array(xs)
        once = project_box(x, -200, 200)
        np.testing.assert_array_equal(project_box(once, -200, 200), once)


class TestAdaptiveStep:
    def test_first_step_uses_secant_branch(self):
        s = OptimizerState(u_current=np.array([1.0, 2.0]), u_previous=np.array([0.0, 0.0]))
        g1, g0 = np.array([0.5, 0.0]), np.array([0.0, 0.0])
        alpha = adaptive_step(s, g1, g0)
        assert alpha == pytest.approx(np.sqrt(5.0) / (2 * 0.5))

    def test_equal_gradients_use_growth_branch(self):
        s = OptimizerState(u_current=np.ones(2), u_previous=np.zeros(2), alpha=0.1, beta=3.0)
        g = np.array([1.0, 1.0])
        assert adaptive_step(s, g, g) == pytest.approx(np.sqrt(4.0) * 0.1)
        assert s.beta == pytest.approx(2.0)

    def test_quadratic_converges(self):
        rng = np.random.default_rng(2)
        L = rng.normal(size=(6, 6))
        Q = L @ L.T + 0.5 * np.eye(6)
        u0 = InputTrajectory.from_blocks(rng.normal(size=2), rng.normal(size=(2, 2)))
        res = optimize_inputs(None, u0, OptimizeOptions(max_iters=5000, rel_tol=0.0), objective=Quadratic(Q))
        assert np.linalg.norm(Q @ res.u.stacked) < 1e-8
        assert res.reason == "grad_tol"


class TestGradient:
    def test_robot_setup_finite_difference(self):
        model = robot_model(10, 0.001)
        u = robot_input(10, optimize_x0=True)
        obj = ErrorObjective(model)
        g = obj.value_and_gradient(u)[1]
        fd = finite_difference_gradient(obj, u, h=1e-5)
        assert np.max(np.abs(g - fd)) / np.max(np.abs(fd)) < 1e-6

    def test_adjoint_matches_coordinate_assembly(self, instance):
        model, u = instance
        obj = ErrorObjective(model)
        np.testing.assert_allclose(obj.value_and_gradient(u, "adjoint")[1], obj.value_and_gradient(u, "coordinate")[1],
                                   rtol=1e-10, atol=1e-14)

    def test_no_information_gives_zero_gradient(self, rng):
        model, u = random_instance(rng, 6, sigma_w_sq=0.0, sigma_x0_sq=0.0)
        T = model.T
        quiet = WienerModel(model.dynamics, NoiseModel.isotropic(2, T, 0.0, 1e14, 0.0), model.basis, model.prior)
        assert np.linalg.norm(error_gradient(quiet, u)) < 1e-9

    def test_masked_coordinates_are_zero(self):
        model = robot_model(6, 0.01)
        g = error_gradient(model, robot_input(6, optimize_x0=False))
        assert not np.any(g[:2]) and np.any(g[2:])

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_random_instances(self, seed):
        rng = np.random.default_rng(seed)
        model, u = random_instance(rng, int(rng.integers(1, 13)))
        obj = ErrorObjective(model)
        g = obj.value_and_gradient(u)[1]
        fd = finite_difference_gradient(obj, u)
        assert np.max(np.abs(g - fd)) / np.max(np.abs(fd)) < 1e-6


class TestOptimize:
    def test_stationary_start(self):
        model = robot_model(5, 0.001)
        u = robot_input(5)
        frozen = InputTrajectory(u.stacked, u.lower, u.upper, np.zeros(len(u), bool))
        res = optimize_inputs(model, frozen)
        assert res.iterations in (0, 1)
        np.testing.assert_array_equal(res.u.stacked, u.stacked)

    def test_robot_descent_and_contracts(self):
        T = 20
        model = robot_model(T, 0.001)
        u0 = robot_input(T)
        res = optimize_inputs(model, u0, OptimizeOptions(max_iters=150))
        J0, J1 = model.error(u0), model.error(res.u)
        assert J1 < J0
        assert np.all(np.diff(res.J_history) <= 0.0)
        np.testing.assert_array_equal(res.u.stacked[:2], u0.stacked[:2])
        assert np.all(res.u.stacked >= u0.lower) and np.all(res.u.stacked <= u0.upper)
        assert res.J_history[-1] == pytest.approx(J1, rel=1e-12)

    def test_tight_box_is_respected(self):
        T = 8
        model = robot_model(T, 0.001)
        u0 = InputTrajectory.from_blocks([3.2, 2.8], np.zeros((T, 2)), -1.0, 1.0, optimize_x0=False)
        res = optimize_inputs(model, u0, OptimizeOptions(max_iters=60))
        assert np.all(np.abs(res.u.stacked[2:]) <= 1.0)

    def test_nonfinite_objective_aborts_with_payload(self):
        class Broken(Quadratic):
            def value_and_gradient(self, u):
                return np.nan, np.zeros(len(u))

        u0 = InputTrajectory.from_blocks([0.0], [[1.0]])
        with pytest.raises(OptimizationError) as exc:
            optimize_inputs(None, u0, objective=Broken(np.eye(2)))
        assert exc.value.payload["iteration"] == 0
        np.testing.assert_array_equal(exc.value.payload["iterate"], u0.stacked)
