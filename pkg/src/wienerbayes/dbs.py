"""Dynamic basis statistics for Fourier output bases.

For ``phi_n(x) = 2 cos(f_n . x)`` (``n >= 1``) and a state trajectory with
Gaussian (or, more generally, elliptical) uncertainty, the means and
cross-time covariances of ``phi(x_t)`` have closed forms in terms of

    a[n, t] = f_n . mean_t
    q[n, t] = f_n' P_t f_n
    c[m, n, t, s] = f_m' C_ts f_n

Everything below is evaluated in real arithmetic.  Using
``cos(a+b) = cos a cos b - sin a sin b`` the Gaussian covariance entry
collapses to

    4 exp(-(q_m + q_n)/2) [cos a_m cos a_n (cosh c - 1) + sin a_m sin a_n sinh c]

which is what :func:`build_design` contracts against the parameter second
moment.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .lifted import DimensionError, StateStatistics
from .prior import ParameterPrior


class FourierBasis:
    """Frequencies ``f_0 .. f_N`` in R^{n_x} with ``f_0 = 0``."""

    def __init__(self, frequencies):
        F = np.atleast_2d(np.asarray(frequencies, dtype=float))
        if F.shape[0] < 1:
            raise ValueError("basis needs at least the constant term")
        if np.any(F[0] != 0.0):
            raise ValueError("f_0 must be the zero vector (constant basis function)")
        if not np.all(np.isfinite(F)):
            raise ValueError("frequencies must be finite")
        F.setflags(write=False)
        self.frequencies = F

    @classmethod
    def default_grid(cls) -> "FourierBasis":
        """Eleven 2-D frequencies used in the planar kinematic experiments."""
        w1, w2 = 2 * np.pi / 10, 2 * np.pi / 6
        F = [[0.0, 0.0]]
        F += [[n * w1, 0.0] for n in (1, 2, 3)]
        F += [[(n - 7) * w1, w2] for n in range(4, 11)]
        return cls(F)

    @property
    def size(self) -> int:
        """Number of basis functions ``N + 1``."""
        return self.frequencies.shape[0]

    @property
    def nx(self) -> int:
        return self.frequencies.shape[1]

    @property
    def F(self) -> np.ndarray:
        """Non-constant frequencies, shape ``(N, n_x)``."""
        return self.frequencies[1:]

    def evaluate(self, x) -> np.ndarray:
        """``phi(x)`` along the last axis: ``(..., n_x) -> (..., N+1)``."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.nx:
            raise DimensionError(f"state has dimension {x.shape[-1]}, basis expects {self.nx}")
        out = np.empty(x.shape[:-1] + (self.size,))
        out[..., 0] = 1.0
        out[..., 1:] = 2.0 * np.cos(x @ self.F.T)
        return out

    def __repr__(self):
        return f"FourierBasis(N+1={self.size}, n_x={self.nx})"


@dataclass(frozen=True)
class NoiseCharacteristic:
    """Characteristic generator ``rho`` acting on quadratic forms ``f' S f``."""

    rho: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"

    def __call__(self, q):
        return self.rho(np.asarray(q, dtype=float))


GAUSSIAN = NoiseCharacteristic(lambda q: np.exp(-0.5 * q), "gaussian")


@dataclass(frozen=True)
class DesignStatistics:
    """``phi_bar`` is ``(N+1, T+1)``; ``M`` is ``(T+1, T+1)``.

    ``blocks`` lists the per-trajectory column counts when several
    independent trajectories are stacked (``M`` is then block-diagonal).
    """

    phi_bar: np.ndarray
    M: np.ndarray
    blocks: Optional[tuple] = None

    @property
    def n_obs(self) -> int:
        return self.phi_bar.shape[1]

    def leading(self, k: int) -> "DesignStatistics":
        """Design restricted to the first ``k`` measurements."""
        return DesignStatistics(self.phi_bar[:, :k], self.M[:k, :k])


def _check_dims(basis: FourierBasis, stats: StateStatistics) -> None:
    if basis.nx != stats.nx:
        raise DimensionError(f"basis frequencies have dimension {basis.nx}, states have {stats.nx}")


def _terms(basis: FourierBasis, stats: StateStatistics):
    F = basis.F
    a = F @ stats.means.T                                   # (N, T+1)
    q = np.einsum("ni,tij,nj->nt", F, stats.covs, F)        # (N, T+1)
    return a, q


def _cross_forms(basis: FourierBasis, stats: StateStatistics) -> np.ndarray:
    F = basis.F
    return np.einsum("mi,tsij,nj->mnts", F, stats.cross, F, optimize=True)


def fourier_mean(basis: FourierBasis, stats: StateStatistics, t: int,
                 characteristic: Optional[NoiseCharacteristic] = None) -> np.ndarray:
    """Mean of ``phi(x_t)``."""
    _check_dims(basis, stats)
    F = basis.F
    a = F @ stats.means[t]
    q = np.einsum("ni,ij,nj->n", F, stats.covs[t], F)
    env = np.exp(-0.5 * q) if characteristic is None else characteristic(q)
    return np.concatenate([[1.0], 2.0 * np.cos(a) * env])


def fourier_cross_cov(basis: FourierBasis, stats: StateStatistics, t: int, s: int, m: int, n: int,
                      characteristic: Optional[NoiseCharacteristic] = None) -> float:
    """``Cov(phi_m(x_t), phi_n(x_s))`` from the four-term sum over sign pairs."""
    _check_dims(basis, stats)
    if m == 0 or n == 0:
        return 0.0
    fm, fn = basis.frequencies[m], basis.frequencies[n]
    a = fm @ stats.means[t]
    b = fn @ stats.means[s]
    qm = fm @ stats.covs[t] @ fm
    qn = fn @ stats.covs[s] @ fn
    c = fm @ stats.cross[t, s] @ fn
    total = 0.0
    for sign in (1.0, -1.0):
        if characteristic is None:
            k = np.exp(-0.5 * (qm + qn)) * np.expm1(-sign * c)
        else:
            k = characteristic(qm + qn + 2.0 * sign * c) - characteristic(qm) * characteristic(qn)
        total += 2.0 * np.cos(a + sign * b) * k
    return float(total)


def mean_matrix(basis: FourierBasis, stats: StateStatistics,
                characteristic: Optional[NoiseCharacteristic] = None) -> np.ndarray:
    """All columns ``mu_phi^t`` at once, shape ``(N+1, T+1)``."""
    _check_dims(basis, stats)
    a, q = _terms(basis, stats)
    env = np.exp(-0.5 * q) if characteristic is None else characteristic(q)
    out = np.empty((basis.size, stats.T + 1))
    out[0] = 1.0
    out[1:] = 2.0 * np.cos(a) * env
    return out


def covariance_tensor(basis: FourierBasis, stats: StateStatistics,
                      characteristic: Optional[NoiseCharacteristic] = None) -> np.ndarray:
    """Full ``Sigma_phi`` as ``(N+1, N+1, T+1, T+1)`` with zero constant rows."""
    _check_dims(basis, stats)
    a, q = _terms(basis, stats)
    c = _cross_forms(basis, stats)
    N, T1 = a.shape
    out = np.zeros((N + 1, N + 1, T1, T1))
    if characteristic is None:
        E = np.exp(-0.5 * q)
        alpha = E * np.cos(a)
        beta = E * np.sin(a)
        out[1:, 1:] = 4.0 * (alpha[:, None, :, None] * alpha[None, :, None, :] * (np.cosh(c) - 1.0)
                             + beta[:, None, :, None] * beta[None, :, None, :] * np.sinh(c))
    else:
        am, an = a[:, None, :, None], a[None, :, None, :]
        qm, qn = q[:, None, :, None], q[None, :, None, :]
        base = characteristic(qm) * characteristic(qn)
        for sign in (1.0, -1.0):
            out[1:, 1:] += 2.0 * np.cos(am + sign * an) * (characteristic(qm + qn + 2.0 * sign * c) - base)
    return out


def _weights(basis: FourierBasis, prior: ParameterPrior) -> np.ndarray:
    if prior.dim != basis.size:
        raise DimensionError(f"prior has dimension {prior.dim}, basis has {basis.size} functions")
    return prior.second_moment[1:, 1:]


def _damped_kernels(c: np.ndarray, s: np.ndarray):
    """``exp(-s) (cosh c - 1)`` and ``exp(-s) sinh c`` without overflow.

    ``s`` is the mean of the two variance forms, so ``|c| <= s`` and the
    exponentials are combined before evaluation when ``c`` is large.  Small
    ``c`` keeps the ``2 sinh(c/2)^2`` form for relative precision.
    """
    small = np.abs(c) < 500.0
    cs = np.where(small, c, 0.0)
    cl = np.where(small, 0.0, np.abs(c))
    sl = np.where(small, 0.0, s)
    es = np.exp(-s)
    up, down = np.exp(cl - sl), np.exp(-cl - sl)
    k1 = np.where(small, es * 2.0 * np.sinh(0.5 * cs) ** 2, 0.5 * (up + down) - np.exp(-sl))
    k2 = np.where(small, es * np.sinh(cs), np.sign(c) * 0.5 * (up - down))
    return k1, k2


class GaussianDesignCache:
    """Input-independent pieces of the Gaussian design.

    Covariances of the state do not depend on the stacked input, so the
    quadratic forms ``q`` and ``c`` (and the kernels built from ``c``) are
    computed once and reused for every mean trajectory an optimizer visits.
    """

    def __init__(self, basis: FourierBasis, prior: ParameterPrior, stats: StateStatistics):
        _check_dims(basis, stats)
        self.basis = basis
        self.W = _weights(basis, prior)
        self.T1 = stats.T + 1
        F = basis.F
        q = np.einsum("ni,tij,nj->nt", F, stats.covs, F)
        c = _cross_forms(basis, stats)
        self.E = np.exp(-0.5 * q)
        self.k1, self.k2 = _damped_kernels(c, 0.5 * (q[:, None, :, None] + q[None, :, None, :]))

    def _alpha_beta(self, means):
        a = self.basis.F @ np.asarray(means).T
        return self.E * np.cos(a), self.E * np.sin(a)

    def _cos_sin(self, means):
        a = self.basis.F @ np.asarray(means).T
        return np.cos(a), np.sin(a)

    def phi_bar(self, means) -> np.ndarray:
        alpha, _ = self._alpha_beta(means)
        out = np.empty((self.basis.size, self.T1))
        out[0] = 1.0
        out[1:] = 2.0 * alpha
        return out

    def design(self, means) -> DesignStatistics:
        alpha, beta = self._alpha_beta(means)
        phi_bar = np.empty((self.basis.size, self.T1))
        phi_bar[0] = 1.0
        phi_bar[1:] = 2.0 * alpha
        if self.basis.size == 1:
            return DesignStatistics(phi_bar, np.zeros((self.T1, self.T1)))
        W = self.W
        ca, sa = self._cos_sin(means)
        M = 4.0 * (np.einsum("mn,mt,ns,mnts->ts", W, ca, ca, self.k1, optimize=True)
                   + np.einsum("mn,mt,ns,mnts->ts", W, sa, sa, self.k2, optimize=True))
        return DesignStatistics(phi_bar, 0.5 * (M + M.T))

    def design_gradient(self, means, sens_i) -> tuple:
        """``(d phi_bar, d M)`` along one input coordinate with mean sensitivity ``sens_i``."""
        T1 = self.T1
        dphi = np.zeros((self.basis.size, T1))
        if self.basis.size == 1:
            return dphi, np.zeros((T1, T1))
        _, beta = self._alpha_beta(means)
        ca, sa = self._cos_sin(means)
        da = self.basis.F @ np.asarray(sens_i).T
        dphi[1:] = -2.0 * beta * da
        W, k1, k2 = self.W, self.k1, self.k2
        half = (np.einsum("mn,mt,ns,mnts->ts", W, -sa * da, ca, k1, optimize=True)
                + np.einsum("mn,mt,ns,mnts->ts", W, ca * da, sa, k2, optimize=True))
        # the (n, s) slot gives the transpose of the (m, t) slot
        dM = 4.0 * (half + half.T)
        return dphi, dM

    def gradient_weights(self, means, K, Z) -> np.ndarray:
        """Reverse-mode contraction for ``sum(K * dM) + sum(Z * dphi_bar)``.

        Returns ``g`` of shape ``(T+1, n_x)`` such that the derivative along
        an input coordinate with mean sensitivities ``s_t`` is
        ``sum_t g[t] . s_t``.  ``K`` must be symmetric.
        """
        if self.basis.size == 1:
            return np.zeros((self.T1, self.basis.nx))
        _, beta = self._alpha_beta(means)
        ca, sa = self._cos_sin(means)
        A1 = np.einsum("ts,mn,ns,mnts->mt", K, self.W, ca, self.k1, optimize=True)
        B2 = np.einsum("ts,mn,ns,mnts->mt", K, self.W, sa, self.k2, optimize=True)
        # (m, t) and (n, s) slots contribute equally because M is symmetric
        ga = 8.0 * (-sa * A1 + ca * B2) - 2.0 * beta * Z[1:]
        return ga.T @ self.basis.F


def build_design(basis: FourierBasis, stats: StateStatistics, prior: ParameterPrior,
                 characteristic: Optional[NoiseCharacteristic] = None) -> DesignStatistics:
    if characteristic is None:
        return GaussianDesignCache(basis, prior, stats).design(stats.means)
    W = _weights(basis, prior)
    phi_bar = mean_matrix(basis, stats, characteristic)
    Sphi = covariance_tensor(basis, stats, characteristic)[1:, 1:]
    M = np.einsum("mn,mnts->ts", W, Sphi)
    return DesignStatistics(phi_bar, 0.5 * (M + M.T))


def build_design_gradient(basis: FourierBasis, stats: StateStatistics, prior: ParameterPrior, i: int):
    """``(d phi_bar / d U_i, d M / d U_i)`` for Gaussian noise.

    Only the cosine arguments depend on the input; covariances do not.
    """
    if stats.sens is None:
        raise ValueError("state statistics carry no input sensitivities; "
                         "call propagate_state_stats(..., with_sensitivities=True)")
    if not 0 <= i < stats.sens.shape[0]:
        raise IndexError(f"input coordinate {i} out of range")
    return GaussianDesignCache(basis, prior, stats).design_gradient(stats.means, stats.sens[i])


def lifted_quadratic_forms(basis: FourierBasis, Abar: np.ndarray, Sigma_W: np.ndarray, nx: int):
    """``q`` and ``c`` via an explicit square root of the lifted noise covariance.

    Diagnostic route for the generic characteristic path; matches the
    recursion-based forms used by :func:`build_design`.
    """
    from .constants import SQRT_CLIP
    from .lifted import psd_sqrt

    S = psd_sqrt(Sigma_W, clip=-SQRT_CLIP)
    T1 = Abar.shape[0] // nx
    F = basis.F
    # g[n, t] = S Abar_t' f_n
    g = np.stack([np.stack([S @ Abar[t * nx:(t + 1) * nx].T @ f for t in range(T1)]) for f in F])
    q = np.einsum("ntk,ntk->nt", g, g)
    c = np.einsum("mtk,nsk->mnts", g, g)
    return q, c
