"""Input design by projected gradient descent on the analytic estimation error."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import constants as C
from .dbs import GaussianDesignCache
from .estimators import EstimatorGain, bayes_gain
from .lifted import InputTrajectory, LinearDynamics, all_input_sensitivities, propagate_covariances, propagate_means, StateStatistics
from .model import WienerModel

log = logging.getLogger(__name__)


class OptimizationError(RuntimeError):
    """Non-finite objective or gradient; ``payload`` holds the offending iterate."""

    def __init__(self, msg, payload):
        super().__init__(msg)
        self.payload = payload


def backpropagate(dyn: LinearDynamics, g: np.ndarray) -> np.ndarray:
    """Map state-mean weights ``g[t]`` to ``sum_t g[t] . d mean_t / d U``.

    Uses the adjoint recursion ``lam_t = g_t + A_t' lam_{t+1}``; the initial
    mean block receives ``lam_0`` and control ``u_k`` receives
    ``B_k' lam_{k+1}``.
    """
    T, nx, nu = dyn.T, dyn.nx, dyn.nu
    out = np.empty(dyn.n_inputs)
    lam = g[T].copy()
    for k in range(T - 1, -1, -1):
        out[nx + k * nu:nx + (k + 1) * nu] = dyn.B(k).T @ lam
        lam = g[k] + dyn.A(k).T @ lam
    out[:nx] = lam
    return out


class ErrorObjective:
    """``U -> J(U)`` and its gradient for one model.

    State covariances and the kernels built from them do not depend on the
    input, so they are computed once here.
    """

    def __init__(self, model: WienerModel):
        if model.characteristic is not None:
            raise NotImplementedError("input gradients are implemented for Gaussian noise only")
        self.model = model
        covs, cross = propagate_covariances(model.dynamics, model.noise)
        nx = model.dynamics.nx
        self._cov_stats = StateStatistics(np.zeros((model.T + 1, nx)), covs, cross)
        self.cache = GaussianDesignCache(model.basis, model.prior, self._cov_stats)

    def design(self, u: InputTrajectory):
        return self.cache.design(propagate_means(self.model.dynamics, u))

    def gain(self, u: InputTrajectory) -> EstimatorGain:
        return bayes_gain(self.design(u), self.model.prior, self.model.noise.sigma_v_sq)

    def value(self, u: InputTrajectory) -> float:
        return self.gain(u).J

    def value_and_gradient(self, u: InputTrajectory, method: str = "adjoint"):
        dyn, prior = self.model.dynamics, self.model.prior
        means = propagate_means(dyn, u)
        design = self.cache.design(means)
        gain = bayes_gain(design, prior, self.model.noise.sigma_v_sq)
        Psi = gain.Psi
        K = Psi.T @ Psi
        # X = 2 Psi' (Psi Phi' - I) Sigma_theta, so dJ = tr(K dM) + tr(X dPhi)
        X = 2.0 * Psi.T @ (Psi @ design.phi_bar.T - np.eye(prior.dim)) @ prior.Sigma
        if method == "adjoint":
            g = self.cache.gradient_weights(means, K, X.T)
            grad = backpropagate(dyn, g)
        elif method == "coordinate":
            sens = all_input_sensitivities(dyn)
            grad = np.empty(dyn.n_inputs)
            for i in range(dyn.n_inputs):
                dphi, dM = self.cache.design_gradient(means, sens[i])
                grad[i] = np.sum(K * dM) + np.sum(X.T * dphi)
        else:
            raise ValueError(f"unknown gradient method {method!r}")
        grad = np.where(u.opt_mask, grad, 0.0)
        return gain.J, grad


def error_gradient(model: WienerModel, u: InputTrajectory, method: str = "adjoint") -> np.ndarray:
    """Gradient of the analytic error with respect to the stacked input.

    Coordinates excluded by ``u.opt_mask`` get zero.
    """
    return ErrorObjective(model).value_and_gradient(u, method)[1]


def project_box(u_raw, lower, upper) -> np.ndarray:
    return np.clip(u_raw, lower, upper)


@dataclass
class OptimizerState:
    u_current: np.ndarray
    u_previous: Optional[np.ndarray] = None
    alpha: float = C.ALPHA0
    beta: float = np.inf
    iter: int = 0
    J_history: List[float] = field(default_factory=list)


def adaptive_step(prev: OptimizerState, grad_now, grad_prev) -> float:
    """Stepsize ``min(sqrt(1 + beta) alpha, |dU| / (2 |dgrad|))``.

    Updates ``prev.alpha`` and ``prev.beta`` in place and returns the new
    stepsize.  With ``beta = inf`` the first branch is inactive; a zero
    gradient difference leaves only the first branch.
    """
    growth = np.sqrt(1.0 + prev.beta) * prev.alpha
    dg = np.linalg.norm(np.asarray(grad_now) - np.asarray(grad_prev))
    if dg > 0.0:
        du = np.linalg.norm(prev.u_current - prev.u_previous)
        alpha = min(growth, du / (2.0 * dg))
    else:
        alpha = growth
    if not np.isfinite(alpha):
        # both branches unbounded: keep the previous step
        alpha = prev.alpha
    prev.beta = alpha / prev.alpha
    prev.alpha = alpha
    return alpha


@dataclass
class OptimizeOptions:
    max_iters: int = C.MAX_ITERS
    grad_tol: float = C.GRAD_TOL
    rel_tol: float = C.REL_DECREASE_TOL
    stall_window: int = C.STALL_WINDOW
    max_halvings: int = C.MAX_HALVINGS
    alpha0: float = C.ALPHA0


@dataclass
class OptimizeResult:
    u: InputTrajectory
    J_history: List[float]
    iterations: int
    reason: str


def optimize_inputs(model: WienerModel, u0: InputTrajectory, opts: Optional[OptimizeOptions] = None,
                    objective: Optional[ErrorObjective] = None) -> OptimizeResult:
    """Projected gradient descent with adaptive stepsize and monotone acceptance."""
    opts = opts or OptimizeOptions()
    obj = objective or ErrorObjective(model)
    lo, hi, mask = u0.lower, u0.upper, u0.opt_mask

    def evaluate(x, k):
        J, g = obj.value_and_gradient(u0.with_stacked(x))
        if not (np.isfinite(J) and np.all(np.isfinite(g))):
            raise OptimizationError(f"non-finite objective or gradient at iteration {k}",
                                    {"iterate": x.copy(), "iteration": k})
        return J, g

    def step(x, g, alpha):
        y = project_box(x - alpha * g, lo, hi)
        return np.where(mask, y, x)

    x = u0.stacked.copy()
    J, g = evaluate(x, 0)
    state = OptimizerState(u_current=x, alpha=opts.alpha0, J_history=[J])
    if not mask.any() or np.linalg.norm(g) < opts.grad_tol:
        return OptimizeResult(u0, state.J_history, 0, "stationary")

    reason = "max_iters"
    g_prev = None
    for k in range(opts.max_iters):
        alpha_prev = state.alpha
        if k > 0:
            alpha = adaptive_step(state, g, g_prev)
        else:
            alpha = state.alpha
        x_new = step(x, g, alpha)
        J_new, g_new = evaluate(x_new, k + 1)
        halvings = 0
        while J_new > J and halvings < opts.max_halvings:
            alpha *= 0.5
            halvings += 1
            x_new = step(x, g, alpha)
            J_new, g_new = evaluate(x_new, k + 1)
        if J_new > J:
            reason = "no_descent"
            break
        if halvings:
            if k > 0:
                state.beta = alpha / alpha_prev
            state.alpha = alpha
        state.u_previous, state.u_current = x, x_new
        g_prev, x, J, g = g, x_new, J_new, g_new
        state.iter = k + 1
        state.J_history.append(J)
        if np.linalg.norm(g) < opts.grad_tol:
            reason = "grad_tol"
            break
        w = opts.stall_window
        if len(state.J_history) > w:
            ref = state.J_history[-w - 1]
            if ref - J <= opts.rel_tol * abs(ref):
                reason = "stalled"
                break
    log.debug("optimize_inputs: %s after %d iterations, J %.6g -> %.6g",
              reason, state.iter, state.J_history[0], state.J_history[-1])
    return OptimizeResult(u0.with_stacked(x), state.J_history, state.iter, reason)
