from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lifted import repair_psd


@dataclass(frozen=True)
class ParameterPrior:
    """Mean and covariance of the output-function coefficients."""

    mu: np.ndarray
    Sigma: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float)).copy()
        S = repair_psd(self.Sigma, "Sigma_theta")
        if S.shape != (mu.size, mu.size):
            raise ValueError(f"Sigma_theta is {S.shape}, expected {(mu.size, mu.size)}")
        mu.setflags(write=False)
        S.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "Sigma", S)

    @classmethod
    def isotropic(cls, dim: int, mean: float, var: float) -> "ParameterPrior":
        return cls(np.full(dim, float(mean)), float(var) * np.eye(dim))

    @property
    def dim(self) -> int:
        return self.mu.size

    @property
    def second_moment(self) -> np.ndarray:
        """``Sigma + mu mu^T``."""
        return self.Sigma + np.outer(self.mu, self.mu)
