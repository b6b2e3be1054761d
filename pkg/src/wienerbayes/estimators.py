"""Optimal Bayesian affine estimator and ridge-regression baselines."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .constants import LAMBDA_GRID_HI, LAMBDA_GRID_LO, LAMBDA_GRID_POINTS
from .dbs import DesignStatistics, FourierBasis, mean_matrix
from .lifted import DimensionError, StateStatistics
from .prior import ParameterPrior

__all__ = [
    "ParameterPrior", "EstimatorGain", "PosteriorBelief", "NotPositiveDefiniteError",
    "bayes_gain", "bayes_estimate", "posterior_update", "error_information_form",
    "error_path", "rls_matrix", "rls_fit", "lambda_grid",
]


class NotPositiveDefiniteError(LinAlgError):
    pass


@dataclass(frozen=True)
class EstimatorGain:
    """``theta_hat = Psi @ y + psi`` and its expected squared error ``J``."""

    Psi: np.ndarray
    psi: np.ndarray
    J: float
    Sigma_pos: np.ndarray = field(repr=False)

    def estimate(self, y) -> np.ndarray:
        return bayes_estimate(self, y)


@dataclass(frozen=True)
class PosteriorBelief:
    mu: np.ndarray
    Sigma: np.ndarray

    def as_prior(self) -> ParameterPrior:
        return ParameterPrior(self.mu, self.Sigma)


def _sigma_v(sigma_v_sq, n: int) -> np.ndarray:
    sv = np.broadcast_to(np.asarray(sigma_v_sq, dtype=float), (n,))
    if np.any(~(sv > 0.0)):
        raise ValueError("all measurement noise variances must be positive")
    return sv


def _chol(G: np.ndarray, what: str = "G"):
    G = 0.5 * (G + G.T)
    try:
        return cho_factor(G, lower=True, check_finite=True)
    except LinAlgError as exc:
        raise NotPositiveDefiniteError(f"{what} is not positive definite: {exc}") from None


def bayes_gain(design: DesignStatistics, prior: ParameterPrior, sigma_v_sq,
               form: str = "data") -> EstimatorGain:
    """Gain of the optimal affine MMSE estimator.

    ``form="data"`` factorizes the ``(T+1)``-dimensional matrix
    ``Phi' S Phi + M + Sigma_V``; ``form="information"`` works in parameter
    space through ``inv(S) + Phi R^-1 Phi'`` and requires ``S`` positive
    definite.
    """
    Phi = design.phi_bar
    if Phi.shape[0] != prior.dim:
        raise DimensionError(f"design has {Phi.shape[0]} basis rows, prior has dimension {prior.dim}")
    n = Phi.shape[1]
    sv = _sigma_v(sigma_v_sq, n)
    S = prior.Sigma
    if form == "data":
        SPhi = S @ Phi
        G = Phi.T @ SPhi + design.M
        G[np.diag_indices(n)] += sv
        cf = _chol(G)
        Psi = cho_solve(cf, SPhi.T).T
        Sigma_pos = S - Psi @ SPhi.T
    elif form == "information":
        R = design.M.copy()
        R[np.diag_indices(n)] += sv
        cfR = _chol(R, "M + Sigma_V")
        RiPhiT = cho_solve(cfR, Phi.T)
        cfS = _chol(S, "Sigma_theta")
        Info = cho_solve(cfS, np.eye(prior.dim)) + Phi @ RiPhiT
        cfI = _chol(Info, "information matrix")
        Sigma_pos = cho_solve(cfI, np.eye(prior.dim))
        Psi = Sigma_pos @ RiPhiT.T
    else:
        raise ValueError(f"unknown form {form!r}")
    Sigma_pos = 0.5 * (Sigma_pos + Sigma_pos.T)
    psi = prior.mu - Psi @ (Phi.T @ prior.mu)
    J = float(np.trace(Sigma_pos))
    return EstimatorGain(Psi=Psi, psi=psi, J=J, Sigma_pos=Sigma_pos)


def error_information_form(design: DesignStatistics, prior: ParameterPrior, sigma_v_sq) -> float:
    """``trace(inv(inv(S) + Phi R^-1 Phi'))`` with ``R = M + Sigma_V``."""
    return bayes_gain(design, prior, sigma_v_sq, form="information").J


def bayes_estimate(gain: EstimatorGain, y) -> np.ndarray:
    """Apply the gain to one measurement vector or to rows of a 2-D array."""
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != gain.Psi.shape[1]:
        raise DimensionError(f"measurement length {y.shape[-1]} != {gain.Psi.shape[1]}")
    if not np.all(np.isfinite(y)):
        raise ValueError("measurements must be finite")
    return y @ gain.Psi.T + gain.psi


def posterior_update(gain: EstimatorGain, design: DesignStatistics, prior: ParameterPrior, y) -> PosteriorBelief:
    y = np.asarray(y, dtype=float)
    if y.shape != (design.n_obs,):
        raise DimensionError(f"measurement length {y.shape} != ({design.n_obs},)")
    mu = prior.mu + gain.Psi @ (y - design.phi_bar.T @ prior.mu)
    return PosteriorBelief(mu=mu, Sigma=gain.Sigma_pos)


def error_path(design: DesignStatistics, prior: ParameterPrior, sigma_v_sq) -> np.ndarray:
    """``J`` using the first ``t+1`` measurements, for ``t = 0 .. T``."""
    n = design.n_obs
    sv = _sigma_v(sigma_v_sq, n)
    return np.array([bayes_gain(design.leading(k), prior, sv[:k]).J for k in range(1, n + 1)])


def _approx_features(mode: str, basis: FourierBasis, stats: StateStatistics) -> np.ndarray:
    mode = mode.upper()
    if mode == "DLS":
        return basis.evaluate(stats.means).T
    if mode == "MLS":
        return mean_matrix(basis, stats)
    raise ValueError(f"unknown least-squares mode {mode!r}; expected DLS or MLS")


def rls_matrix(mode: str, lam: float, basis: FourierBasis, stats: StateStatistics) -> np.ndarray:
    """Linear map ``L`` with ``theta_LS = L @ y``."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    Phi = _approx_features(mode, basis, stats)
    H = Phi @ Phi.T
    H[np.diag_indices_from(H)] += lam
    if lam == 0.0 and np.linalg.matrix_rank(H) < H.shape[0]:
        raise NotPositiveDefiniteError("normal equations are singular at lambda=0; use lambda > 0")
    try:
        cf = cho_factor(H, lower=True)
    except LinAlgError:
        raise NotPositiveDefiniteError(
            f"normal equations are singular at lambda={lam}; use a larger lambda") from None
    return cho_solve(cf, Phi)


def rls_fit(mode: str, lam: float, basis: FourierBasis, stats: StateStatistics, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != stats.T + 1:
        raise DimensionError(f"measurement length {y.shape[-1]} != {stats.T + 1}")
    return y @ rls_matrix(mode, lam, basis, stats).T


def lambda_grid(n: int = LAMBDA_GRID_POINTS, lo: float = LAMBDA_GRID_LO,
                hi: float = LAMBDA_GRID_HI) -> np.ndarray:
    return np.logspace(np.log10(lo), np.log10(hi), n)
