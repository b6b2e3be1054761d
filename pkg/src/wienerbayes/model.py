"""Problem instance bundling dynamics, noise, basis and prior."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .dbs import DesignStatistics, FourierBasis, NoiseCharacteristic, build_design
from .estimators import EstimatorGain, bayes_gain
from .lifted import InputTrajectory, LinearDynamics, NoiseModel, StateStatistics, propagate_state_stats
from .prior import ParameterPrior

DEFAULT_DT = 0.1
DEFAULT_MU_X0 = (3.2, 2.8)
DEFAULT_INPUT_FREQS = (3.0, 5.0, 10.0, 20.0, 100.0)
DEFAULT_INPUT_GAIN = 4.5
DEFAULT_INPUT_BOUND = 200.0
DEFAULT_SIGMA_V_SQ = 0.01
DEFAULT_SIGMA_W_SQ = (0.0, 0.001, 0.01)
DEFAULT_THETA_RANGE = (2.0, 8.0)


@dataclass(frozen=True)
class WienerModel:
    dynamics: LinearDynamics
    noise: NoiseModel
    basis: FourierBasis
    prior: ParameterPrior
    characteristic: Optional[NoiseCharacteristic] = None

    def __post_init__(self):
        self.noise.check(self.dynamics)
        if self.basis.nx != self.dynamics.nx:
            raise ValueError(f"basis dimension {self.basis.nx} != state dimension {self.dynamics.nx}")
        if self.prior.dim != self.basis.size:
            raise ValueError(f"prior dimension {self.prior.dim} != basis size {self.basis.size}")

    @property
    def T(self) -> int:
        return self.dynamics.T

    def statistics(self, u: InputTrajectory, with_sensitivities: bool = False) -> StateStatistics:
        return propagate_state_stats(self.dynamics, self.noise, u, with_sensitivities)

    def design(self, u: InputTrajectory) -> DesignStatistics:
        return build_design(self.basis, self.statistics(u), self.prior, self.characteristic)

    def gain(self, u: InputTrajectory) -> EstimatorGain:
        return bayes_gain(self.design(u), self.prior, self.noise.sigma_v_sq)

    def error(self, u: InputTrajectory) -> float:
        return self.gain(u).J

    def with_horizon(self, T: int) -> "WienerModel":
        """Same time-invariant model over a new horizon."""
        if len(self.noise.Sigma_w) > 1 and len(set(map(bytes, self.noise.Sigma_w))) > 1:
            raise ValueError("with_horizon needs time-invariant process noise")
        nx = self.dynamics.nx
        Sw = self.noise.Sigma_w[0] if len(self.noise.Sigma_w) else np.zeros((nx, nx))
        sv = np.full(T + 1, self.noise.sigma_v_sq[0])
        noise = NoiseModel(self.noise.Sigma_x0, np.broadcast_to(Sw, (T, nx, nx)).copy(), sv, self.noise.kind)
        return replace(self, dynamics=self.dynamics.with_horizon(T), noise=noise)


def sinusoid_controls(T: int, freqs: Sequence[float] = DEFAULT_INPUT_FREQS, gain: float = DEFAULT_INPUT_GAIN,
                      dt: Optional[float] = None) -> np.ndarray:
    """``u_t = gain * sum_k [cos(w_k t), sin(w_k t)]`` for ``t = 0 .. T-1``.

    With ``dt`` given the argument is the physical time ``t * dt`` instead of
    the sample index.
    """
    t = np.arange(T, dtype=float)
    if dt is not None:
        t = t * dt
    w = np.asarray(freqs, dtype=float)[:, None]
    return gain * np.stack([np.cos(w * t).sum(0), np.sin(w * t).sum(0)], axis=1)


def robot_model(T: int, sigma_w_sq: float, sigma_v_sq: float = DEFAULT_SIGMA_V_SQ, dt: float = DEFAULT_DT,
                basis: Optional[FourierBasis] = None, theta_range=DEFAULT_THETA_RANGE) -> WienerModel:
    """Planar kinematic robot ``x+ = x + dt u`` with the default Fourier basis."""
    dyn = LinearDynamics.lti(np.eye(2), dt * np.eye(2), T)
    noise = NoiseModel.isotropic(2, T, sigma_w_sq, sigma_v_sq)
    basis = basis or FourierBasis.default_grid()
    a, b = theta_range
    prior = ParameterPrior.isotropic(basis.size, 0.5 * (a + b), (b - a) ** 2 / 12.0)
    return WienerModel(dyn, noise, basis, prior)


def robot_input(T: int, mu_x0=DEFAULT_MU_X0, bound: float = DEFAULT_INPUT_BOUND,
                optimize_x0: bool = False, time_scale: str = "seconds", dt: float = DEFAULT_DT) -> InputTrajectory:
    """Default sinusoidal excitation with the initial-state mean held fixed.

    ``time_scale="seconds"`` evaluates the sinusoids at ``t * dt``;
    ``"index"`` uses the raw sample index.
    """
    if time_scale not in ("seconds", "index"):
        raise ValueError(f"time_scale must be 'seconds' or 'index', got {time_scale!r}")
    controls = sinusoid_controls(T, dt=dt if time_scale == "seconds" else None)
    return InputTrajectory.from_blocks(mu_x0, controls.reshape(T, 2), -bound, bound, optimize_x0=optimize_x0)
