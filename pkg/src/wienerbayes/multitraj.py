"""Estimation from several independent trajectories and consistency diagnostics."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import block_diag

from .active import ErrorObjective, backpropagate
from .dbs import DesignStatistics, FourierBasis, NoiseCharacteristic, build_design
from .estimators import EstimatorGain, bayes_gain, error_path
from .lifted import DimensionError, InputTrajectory, LinearDynamics, NoiseModel, propagate_means
from .model import WienerModel
from .prior import ParameterPrior


@dataclass(frozen=True)
class Batch:
    """One independent trajectory: dynamics, noise and its own stacked input."""

    dynamics: LinearDynamics
    noise: NoiseModel
    u: InputTrajectory

    def __post_init__(self):
        self.noise.check(self.dynamics)
        if len(self.u) != self.dynamics.n_inputs:
            raise DimensionError(f"input has length {len(self.u)}, dynamics expect {self.dynamics.n_inputs}")

    @property
    def T(self) -> int:
        return self.dynamics.T

    def model(self, basis: FourierBasis, prior: ParameterPrior,
              characteristic: Optional[NoiseCharacteristic] = None) -> WienerModel:
        return WienerModel(self.dynamics, self.noise, basis, prior, characteristic)


@dataclass(frozen=True)
class MultiTrajectoryPlan:
    batches: Tuple[Batch, ...]

    def __post_init__(self):
        b = tuple(self.batches)
        if not b:
            raise ValueError("a plan needs at least one batch")
        nx = b[0].dynamics.nx
        for i, batch in enumerate(b):
            if batch.dynamics.nx != nx:
                raise DimensionError(f"batch {i} has state dimension {batch.dynamics.nx}, expected {nx}")
        object.__setattr__(self, "batches", b)

    @classmethod
    def repeated(cls, dynamics: LinearDynamics, noise: NoiseModel, u: InputTrajectory, tau: int):
        return cls(tuple(Batch(dynamics, noise, u) for _ in range(tau)))

    @property
    def tau(self) -> int:
        return len(self.batches)

    @property
    def horizons(self) -> Tuple[int, ...]:
        return tuple(b.T for b in self.batches)

    @property
    def total_length(self) -> int:
        """Total number of measurements ``sum(T_i + 1)``."""
        return sum(b.T + 1 for b in self.batches)

    @property
    def sigma_v_sq(self) -> np.ndarray:
        return np.concatenate([b.noise.sigma_v_sq for b in self.batches])

    def column_slices(self) -> List[slice]:
        out, s = [], 0
        for b in self.batches:
            out.append(slice(s, s + b.T + 1))
            s += b.T + 1
        return out

    def input_slices(self) -> List[slice]:
        out, s = [], 0
        for b in self.batches:
            n = len(b.u)
            out.append(slice(s, s + n))
            s += n
        return out

    def stacked_input(self) -> InputTrajectory:
        """All batch inputs concatenated into one trajectory (bounds and mask included)."""
        us = [b.u for b in self.batches]
        return InputTrajectory(np.concatenate([u.stacked for u in us]), np.concatenate([u.lower for u in us]),
                               np.concatenate([u.upper for u in us]), np.concatenate([u.opt_mask for u in us]))

    def with_stacked_input(self, stacked) -> "MultiTrajectoryPlan":
        stacked = np.asarray(stacked, dtype=float)
        return MultiTrajectoryPlan(tuple(Batch(b.dynamics, b.noise, b.u.with_stacked(stacked[sl]))
                                         for b, sl in zip(self.batches, self.input_slices())))


def assemble_multi(plan: MultiTrajectoryPlan, basis: FourierBasis, prior: ParameterPrior,
                   characteristic: Optional[NoiseCharacteristic] = None) -> DesignStatistics:
    """Stacked design: concatenated ``phi_bar`` and block-diagonal ``M``."""
    designs = [b.model(basis, prior, characteristic).design(b.u) for b in plan.batches]
    phi = np.concatenate([d.phi_bar for d in designs], axis=1)
    M = block_diag(*[d.M for d in designs])
    return DesignStatistics(phi, M, blocks=tuple(d.n_obs for d in designs))


def multi_gain(plan: MultiTrajectoryPlan, basis: FourierBasis, prior: ParameterPrior,
               characteristic: Optional[NoiseCharacteristic] = None) -> EstimatorGain:
    return bayes_gain(assemble_multi(plan, basis, prior, characteristic), prior, plan.sigma_v_sq)


def information_matrix(plan: MultiTrajectoryPlan, basis: FourierBasis, prior: ParameterPrior,
                       characteristic: Optional[NoiseCharacteristic] = None):
    """``sum_i m_i m_i' / (M00_i + sigma_v0_i^2)`` over batches, and its smallest eigenvalue.

    ``m_i`` is the mean basis vector at the first sample of batch ``i``.
    """
    info = np.zeros((basis.size, basis.size))
    for b in plan.batches:
        d = b.model(basis, prior, characteristic).design(b.u)
        m0 = d.phi_bar[:, 0]
        info += np.outer(m0, m0) / (d.M[0, 0] + b.noise.sigma_v_sq[0])
    return info, float(np.linalg.eigvalsh(info)[0])


def inconsistency_probe(model: WienerModel, u: InputTrajectory, horizons: Sequence[int]) -> np.ndarray:
    """``J*(t)`` for each ``t`` in ``horizons`` along one trajectory.

    The horizons are nested prefixes of the trajectory described by ``model``
    and ``u``, so one design covers all of them.
    """
    horizons = [int(h) for h in horizons]
    if horizons and (min(horizons) < 0 or max(horizons) > model.T):
        raise ValueError(f"horizons must lie in [0, {model.T}]")
    path = error_path(model.design(u), model.prior, model.noise.sigma_v_sq)
    return path[horizons]


def spread_initial_means(count: int, lower, upper) -> np.ndarray:
    """Deterministic low-discrepancy points in the box ``[lower, upper)``.

    Uses the additive recurrence ``frac(k * alpha)`` with ``alpha`` built from
    the generalized golden ratio.  Its irrational steps avoid the rational
    lattices that would alias with commensurate Fourier frequencies.
    """
    lower = np.asarray(lower, dtype=float).ravel()
    upper = np.asarray(upper, dtype=float).ravel()
    d = lower.size
    g = 2.0
    for _ in range(64):
        g = (1.0 + g) ** (1.0 / (d + 1))
    alpha = (1.0 / g) ** np.arange(1, d + 1)
    k = np.arange(1, count + 1)[:, None]
    pts = np.mod(0.5 + k * alpha, 1.0)
    return lower + pts * (upper - lower)


class MultiErrorObjective:
    """``J`` of the stacked estimator as a function of all batch inputs at once.

    Works with :func:`wienerbayes.active.optimize_inputs` through
    ``value_and_gradient`` on the concatenated input from
    :meth:`MultiTrajectoryPlan.stacked_input`.
    """

    def __init__(self, plan: MultiTrajectoryPlan, basis: FourierBasis, prior: ParameterPrior):
        self.plan = plan
        self.prior = prior
        self.parts = [ErrorObjective(b.model(basis, prior)) for b in plan.batches]
        self.cols = plan.column_slices()
        self.ins = plan.input_slices()
        self.sv = plan.sigma_v_sq

    def _designs(self, x):
        means, designs = [], []
        for part, sl in zip(self.parts, self.ins):
            mu = propagate_means(part.model.dynamics, x[sl])
            means.append(mu)
            designs.append(part.cache.design(mu))
        phi = np.concatenate([d.phi_bar for d in designs], axis=1)
        return means, DesignStatistics(phi, block_diag(*[d.M for d in designs]))

    def value(self, u: InputTrajectory) -> float:
        return bayes_gain(self._designs(u.stacked)[1], self.prior, self.sv).J

    def value_and_gradient(self, u: InputTrajectory):
        means, design = self._designs(u.stacked)
        gain = bayes_gain(design, self.prior, self.sv)
        Psi = gain.Psi
        K = Psi.T @ Psi
        Z = (2.0 * Psi.T @ (Psi @ design.phi_bar.T - np.eye(self.prior.dim)) @ self.prior.Sigma).T
        grad = np.empty(len(u))
        for part, mu, cs, sl in zip(self.parts, means, self.cols, self.ins):
            g = part.cache.gradient_weights(mu, K[cs, cs], Z[:, cs])
            grad[sl] = backpropagate(part.model.dynamics, g)
        return gain.J, np.where(u.opt_mask, grad, 0.0)



def simulate_plan_from_normals(plan: MultiTrajectoryPlan, basis: FourierBasis, prior: ParameterPrior,
                               theta, z_w, z_v) -> np.ndarray:
    """Stacked measurements ``(R, total_length)`` for every replicate.

    ``z_w`` has shape ``(R, total_length, n_x)`` and ``z_v`` has shape
    ``(R, total_length)``.  Sample ``k`` of the stack consumes row ``k`` of
    both arrays, so plans with the same total length share one realization.
    The first row of each batch perturbs that batch's initial state.
    """
    from .sim import simulate_from_normals

    theta = np.atleast_2d(theta)
    z_w = np.asarray(z_w, dtype=float)
    z_v = np.asarray(z_v, dtype=float)
    n = plan.total_length
    if z_w.shape[1] < n or z_v.shape[1] < n:
        raise DimensionError(f"need {n} noise rows per replicate")
    out = np.empty((theta.shape[0], n))
    for b, cs in zip(plan.batches, plan.column_slices()):
        out[:, cs] = simulate_from_normals(b.model(basis, prior), b.u, theta, z_w[:, cs], z_v[:, cs])[1]
    return out
