import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wienerbayes.dbs import DesignStatistics, FourierBasis
from wienerbayes.estimators import (NotPositiveDefiniteError, bayes_estimate, bayes_gain, error_information_form,
                                    error_path, lambda_grid, posterior_update, rls_fit, rls_matrix)
from wienerbayes.lifted import DimensionError, InputTrajectory, LinearDynamics, NoiseModel
from wienerbayes.model import WienerModel
from wienerbayes.prior import ParameterPrior
from wienerbayes.sim import simulate_from_normals
from wienerbayes.validation import random_instance


def _scalar_design():
    return DesignStatistics(np.ones((1, 1)), np.zeros((1, 1)))


class TestBayesGain:
    def test_scalar_conjugate(self):
        g = bayes_gain(_scalar_design(), ParameterPrior([0.0], [[1.0]]), [1.0])
        np.testing.assert_allclose(g.Psi, [[0.5]])
        np.testing.assert_allclose(g.psi, [0.0])
        assert g.J == pytest.approx(0.5)
        np.testing.assert_allclose(bayes_estimate(g, [2.0]), [1.0])

    def test_uninformative_data(self, instance):
        model, u = instance
        g = bayes_gain(model.design(u), model.prior, 1e12)
        assert np.linalg.norm(g.Psi) < 1e-9
        assert g.J == pytest.approx(np.trace(model.prior.Sigma), rel=1e-6)
        np.testing.assert_allclose(g.Sigma_pos, model.prior.Sigma, rtol=1e-9, atol=1e-12)

    def test_information_form(self, rng):
        model, u = random_instance(rng, 20, N=5)
        d = model.design(u)
        J = bayes_gain(d, model.prior, model.noise.sigma_v_sq).J
        assert error_information_form(d, model.prior, model.noise.sigma_v_sq) == pytest.approx(J, rel=1e-8)

    def test_bounds_and_contraction(self, instance):
        model, u = instance
        g = model.gain(u)
        assert 0.0 <= g.J <= np.trace(model.prior.Sigma)
        assert np.linalg.eigvalsh(model.prior.Sigma - g.Sigma_pos).min() >= -1e-10
        assert np.trace(g.Sigma_pos) == pytest.approx(g.J, abs=1e-12)

    def test_dimension_mismatch(self, instance):
        model, u = instance
        with pytest.raises(DimensionError):
            bayes_gain(model.design(u), ParameterPrior.isotropic(3, 0, 1), model.noise.sigma_v_sq)

    def test_not_positive_definite(self):
        d = DesignStatistics(np.ones((1, 2)), -np.eye(2) * 10)
        with pytest.raises(NotPositiveDefiniteError):
            bayes_gain(d, ParameterPrior([0.0], [[1.0]]), 1.0)


class TestEstimate:
    def test_prior_prediction_returns_prior_mean(self, instance):
        model, u = instance
        d = model.design(u)
        g = model.gain(u)
        y = d.phi_bar.T @ model.prior.mu
        np.testing.assert_allclose(bayes_estimate(g, y), model.prior.mu, atol=1e-10)
        np.testing.assert_allclose(posterior_update(g, d, model.prior, y).mu, model.prior.mu, atol=1e-10)

    def test_rejects_nonfinite(self, instance):
        model, u = instance
        y = np.zeros(model.T + 1)
        y[0] = np.nan
        with pytest.raises(ValueError):
            bayes_estimate(model.gain(u), y)

    def test_bayesian_unbiased(self):
        rng = np.random.default_rng(11)
        model, u = random_instance(rng, 8)
        g = model.gain(u)
        n = 10_000
        P = model.prior
        theta = P.mu + rng.standard_normal((n, P.dim)) @ np.linalg.cholesky(P.Sigma).T
        _, y = simulate_from_normals(model, u, theta, rng.standard_normal((n, model.T + 1, 2)),
                                     rng.standard_normal((n, model.T + 1)))
        err = theta - bayes_estimate(g, y)
        se = err.std(0, ddof=1) / np.sqrt(n)
        assert np.all(np.abs(err.mean(0)) < 4 * se)

    def test_affine_optimality(self):
        """Perturbing the gain does not lower the Monte Carlo error beyond noise."""
        rng = np.random.default_rng(12)
        model, u = random_instance(rng, 6)
        g = model.gain(u)
        n = 20_000
        P = model.prior
        theta = P.mu + rng.standard_normal((n, P.dim)) @ np.linalg.cholesky(P.Sigma).T
        _, y = simulate_from_normals(model, u, theta, rng.standard_normal((n, model.T + 1, 2)),
                                     rng.standard_normal((n, model.T + 1)))
        base = np.sum((theta - bayes_estimate(g, y)) ** 2, 1)
        for _ in range(5):
            D = rng.normal(size=g.Psi.shape)
            D *= 1e-3 / np.linalg.norm(D)
            alt = np.sum((theta - (y @ (g.Psi + D).T + g.psi)) ** 2, 1)
            diff = alt - base
            assert diff.mean() > -3 * diff.std() / np.sqrt(n)


class TestErrorPath:
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_monotone(self, seed):
        rng = np.random.default_rng(seed)
        model, u = random_instance(rng, int(rng.integers(1, 20)))
        path = error_path(model.design(u), model.prior, model.noise.sigma_v_sq)
        assert np.all(np.diff(path) <= 1e-12)

    def test_last_entry_is_full_error(self, instance):
        model, u = instance
        path = error_path(model.design(u), model.prior, model.noise.sigma_v_sq)
        assert path[-1] == pytest.approx(model.error(u), rel=1e-12)


class TestConjugateExactness:
    def test_matches_closed_form_posterior(self, rng):
        model, u = random_instance(rng, 9, sigma_w_sq=0.0, sigma_x0_sq=0.0)
        Phi = model.basis.evaluate(model.statistics(u).means).T
        P = model.prior
        sv = model.noise.sigma_v_sq
        y = rng.normal(size=model.T + 1)
        # joint Gaussian conditioning in data space
        S_yy = Phi.T @ P.Sigma @ Phi + np.diag(sv)
        exact = P.mu + P.Sigma @ Phi @ np.linalg.solve(S_yy, y - Phi.T @ P.mu)
        np.testing.assert_allclose(bayes_estimate(model.gain(u), y), exact, atol=1e-10, rtol=0)


class TestRidge:
    def test_heavy_shrinkage(self, instance):
        model, u = instance
        s = model.statistics(u)
        y = np.ones(model.T + 1)
        th = rls_fit("DLS", 1e12, model.basis, s, y)
        Phi = model.basis.evaluate(s.means).T
        assert np.linalg.norm(th) < 1e-9 * np.linalg.norm(Phi @ y)

    def test_modes_coincide_without_noise(self, rng):
        model, u = random_instance(rng, 9, sigma_w_sq=0.0, sigma_x0_sq=0.0)
        s = model.statistics(u)
        np.testing.assert_allclose(rls_matrix("DLS", 0.1, model.basis, s), rls_matrix("MLS", 0.1, model.basis, s),
                                   atol=1e-14)

    def test_singular_at_zero(self, rng):
        model, u = random_instance(rng, 1)
        with pytest.raises(NotPositiveDefiniteError):
            rls_matrix("MLS", 0.0, model.basis, model.statistics(u))

    def test_unknown_mode(self, instance):
        model, u = instance
        with pytest.raises(ValueError):
            rls_matrix("XLS", 1.0, model.basis, model.statistics(u))

    def test_recovery_improves_with_length(self):
        rng = np.random.default_rng(4)
        basis = FourierBasis([[0.0, 0.0], [0.7, 0.0], [0.0, 1.1], [0.5, 0.5]])
        theta = rng.uniform(2, 8, 4)
        errs = []
        for T in (8, 32, 128):
            dyn = LinearDynamics.lti(np.eye(2), 0.1 * np.eye(2), T)
            noise = NoiseModel.isotropic(2, T, 0.0, 1e-12)
            ctrl = 3 * np.stack([np.cos(0.37 * np.arange(T)) + np.sin(1.3 * np.arange(T)),
                                 np.sin(0.23 * np.arange(T)) + np.cos(0.9 * np.arange(T))], 1)
            u = InputTrajectory.from_blocks([0.3, -0.2], ctrl)
            model = WienerModel(dyn, noise, basis, ParameterPrior.isotropic(4, 5, 3))
            # noiseless outputs: the remaining error is the ridge bias, which shrinks as data accrue
            _, y = simulate_from_normals(model, u, theta, np.zeros((1, T + 1, 2)), np.zeros((1, T + 1)))
            th = rls_fit("DLS", 1e-8, basis, model.statistics(u), y[0])
            errs.append(np.linalg.norm(th - theta))
        assert errs[0] > errs[1] > errs[2]

    def test_grid(self):
        g = lambda_grid()
        assert g.size == 30 and g[0] == pytest.approx(1e-6) and g[-1] == pytest.approx(1e3)

    def test_negative_lambda(self, instance):
        model, u = instance
        with pytest.raises(ValueError):
            rls_matrix("DLS", -1.0, model.basis, model.statistics(u))
