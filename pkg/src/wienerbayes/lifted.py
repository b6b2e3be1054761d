"""Linear time-varying process model and exact propagation of state statistics.

The state recursion is ``x[t+1] = A[t] x[t] + B[t] u[t] + w[t+1]`` with
``x[0] ~ (mu_x0, Sigma_x0)``.  Stacking the whole trajectory gives the lifted
relation ``X = Abar (Bbar U + W)`` where ``U = [mu_x0; u_0; ...; u_{T-1}]``.
Everything here works with forward recursions; the lifted matrices are only
materialized on request for cross-checks.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .constants import LIFTED_CAP, PSD_TOL


class DimensionError(ValueError):
    """Raised when array shapes disagree with the declared model dimensions."""


def repair_psd(S, name: str = "covariance", tol: float = PSD_TOL) -> np.ndarray:
    """Symmetrize ``S`` and clip tiny negative eigenvalues to zero.

    Raises ``ValueError`` if an eigenvalue is below ``-tol``.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[0] != S.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {S.shape}")
    S = 0.5 * (S + S.T)
    if not np.all(np.isfinite(S)):
        raise ValueError(f"{name} has non-finite entries")
    w, V = np.linalg.eigh(S)
    if w.size and w.min() < -tol:
        raise ValueError(f"{name} is not positive semidefinite (min eigenvalue {w.min():.3e})")
    if w.size and w.min() < 0.0:
        w = np.clip(w, 0.0, None)
        S = (V * w) @ V.T
        S = 0.5 * (S + S.T)
    return S


def psd_sqrt(S, clip: float = 0.0) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition."""
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    w = np.where(w < clip, 0.0, w)
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T


class LinearDynamics:
    """Sequence of ``(A_t, B_t)`` for ``t = 0 .. T-1``.

    A time-invariant model stores a single pair and reports
    ``time_invariant = True``.
    """

    def __init__(self, A, B, horizon: Optional[int] = None):
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        if A.ndim == 2 and B.ndim == 2:
            if horizon is None:
                raise DimensionError("time-invariant dynamics need an explicit horizon")
            self.time_invariant = True
            A = A[None]
            B = B[None]
        elif A.ndim == 3 and B.ndim == 3:
            if horizon is not None and horizon != A.shape[0]:
                raise DimensionError(f"horizon {horizon} disagrees with {A.shape[0]} A matrices")
            if A.shape[0] != B.shape[0]:
                raise DimensionError(f"got {A.shape[0]} A matrices but {B.shape[0]} B matrices")
            horizon = A.shape[0]
            self.time_invariant = False
        else:
            raise DimensionError("A and B must both be 2-D (time-invariant) or both 3-D")
        if horizon < 0:
            raise DimensionError("horizon must be nonnegative")
        nx = A.shape[-1]
        if A.shape[-2] != nx:
            raise DimensionError(f"A matrices must be square, got {A.shape[-2:]}")
        if B.shape[-2] != nx:
            raise DimensionError(f"B has {B.shape[-2]} rows, expected {nx}")
        for k in range(A.shape[0]):
            if not (np.all(np.isfinite(A[k])) and np.all(np.isfinite(B[k]))):
                raise DimensionError(f"non-finite entries in A/B at index {k}")
        A.setflags(write=False)
        B.setflags(write=False)
        self._A = A
        self._B = B
        self.nx = nx
        self.nu = B.shape[-1]
        self.T = int(horizon)

    @classmethod
    def lti(cls, A, B, horizon: int) -> "LinearDynamics":
        return cls(np.atleast_2d(A), np.atleast_2d(B), horizon=horizon)

    def A(self, t: int) -> np.ndarray:
        return self._A[0] if self.time_invariant else self._A[t]

    def B(self, t: int) -> np.ndarray:
        return self._B[0] if self.time_invariant else self._B[t]

    def with_horizon(self, horizon: int) -> "LinearDynamics":
        """Same dynamics over a different horizon (truncation for time-varying)."""
        if self.time_invariant:
            return LinearDynamics(self._A[0], self._B[0], horizon=horizon)
        if horizon > self.T:
            raise DimensionError(f"cannot extend time-varying dynamics from T={self.T} to {horizon}")
        return LinearDynamics(self._A[:horizon], self._B[:horizon])

    @property
    def n_inputs(self) -> int:
        """Length of the stacked input vector ``[mu_x0; u_0; ...; u_{T-1}]``."""
        return self.nx + self.T * self.nu

    def __repr__(self):
        kind = "LTI" if self.time_invariant else "LTV"
        return f"LinearDynamics({kind}, nx={self.nx}, nu={self.nu}, T={self.T})"


@dataclass(frozen=True)
class NoiseModel:
    """Second-order noise description.

    ``Sigma_w[k]`` is the covariance of ``w[k+1]``, the noise entering on the
    step from ``t=k`` to ``t=k+1``; ``sigma_v_sq`` has one entry per
    measurement time ``0 .. T``.
    """

    Sigma_x0: np.ndarray
    Sigma_w: np.ndarray
    sigma_v_sq: np.ndarray
    kind: str = "gaussian"

    def __post_init__(self):
        Sx0 = repair_psd(self.Sigma_x0, "Sigma_x0")
        Sw = np.asarray(self.Sigma_w, dtype=float)
        if Sw.ndim == 2:
            Sw = Sw[None]
        Sw = np.stack([repair_psd(S, f"Sigma_w[{k}]") for k, S in enumerate(Sw)]) if len(Sw) else Sw.reshape(0, *Sx0.shape)
        sv = np.atleast_1d(np.asarray(self.sigma_v_sq, dtype=float))
        if np.any(~np.isfinite(sv)) or np.any(sv <= 0.0):
            bad = int(np.flatnonzero(~(sv > 0.0))[0])
            raise ValueError(f"sigma_v_sq[{bad}] = {sv[bad]!r} must be positive")
        if Sw.shape[1:] != Sx0.shape:
            raise DimensionError(f"Sigma_w blocks {Sw.shape[1:]} disagree with Sigma_x0 {Sx0.shape}")
        if self.kind not in ("gaussian", "generic"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        for arr in (Sx0, Sw, sv):
            arr.setflags(write=False)
        object.__setattr__(self, "Sigma_x0", Sx0)
        object.__setattr__(self, "Sigma_w", Sw)
        object.__setattr__(self, "sigma_v_sq", sv)

    @classmethod
    def isotropic(cls, nx: int, T: int, sigma_w_sq: float, sigma_v_sq: float,
                  sigma_x0_sq: Optional[float] = None, kind: str = "gaussian") -> "NoiseModel":
        """Time-invariant isotropic noise; ``sigma_x0_sq`` defaults to ``sigma_w_sq``."""
        if sigma_x0_sq is None:
            sigma_x0_sq = sigma_w_sq
        I = np.eye(nx)
        return cls(Sigma_x0=sigma_x0_sq * I,
                   Sigma_w=np.broadcast_to(sigma_w_sq * I, (T, nx, nx)).copy(),
                   sigma_v_sq=np.full(T + 1, float(sigma_v_sq)),
                   kind=kind)

    def Sw(self, k: int) -> np.ndarray:
        return self.Sigma_w[0] if len(self.Sigma_w) == 1 else self.Sigma_w[k]

    def check(self, dyn: LinearDynamics) -> None:
        if self.Sigma_x0.shape != (dyn.nx, dyn.nx):
            raise DimensionError(f"Sigma_x0 is {self.Sigma_x0.shape}, expected {(dyn.nx, dyn.nx)}")
        if len(self.Sigma_w) not in (1, dyn.T) and not (dyn.T == 0 and len(self.Sigma_w) == 0):
            raise DimensionError(f"got {len(self.Sigma_w)} Sigma_w blocks for horizon {dyn.T}")
        if self.sigma_v_sq.shape != (dyn.T + 1,):
            raise DimensionError(f"sigma_v_sq has length {self.sigma_v_sq.size}, expected {dyn.T + 1}")

    def lifted_covariance(self, T: int) -> np.ndarray:
        """Block-diagonal ``diag(Sigma_x0, Sigma_w1, ..., Sigma_wT)``."""
        nx = self.Sigma_x0.shape[0]
        out = np.zeros((nx * (T + 1), nx * (T + 1)))
        out[:nx, :nx] = self.Sigma_x0
        for k in range(T):
            s = nx * (k + 1)
            out[s:s + nx, s:s + nx] = self.Sw(k)
        return out


@dataclass(frozen=True)
class InputTrajectory:
    """Stacked input ``[mu_x0; u_0; ...; u_{T-1}]`` with box bounds and mask."""

    stacked: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    opt_mask: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.stacked, dtype=float).ravel().copy()
        lo = np.broadcast_to(np.asarray(self.lower, dtype=float), x.shape).copy()
        hi = np.broadcast_to(np.asarray(self.upper, dtype=float), x.shape).copy()
        mask = np.broadcast_to(np.asarray(self.opt_mask, dtype=bool), x.shape).copy()
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        bad = np.flatnonzero((x < lo) | (x > hi))
        if bad.size:
            raise ValueError(f"input coordinate {bad[0]} = {x[bad[0]]} outside [{lo[bad[0]]}, {hi[bad[0]]}]")
        for arr in (x, lo, hi, mask):
            arr.setflags(write=False)
        object.__setattr__(self, "stacked", x)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "opt_mask", mask)

    @classmethod
    def from_blocks(cls, mu_x0, controls, lower=-np.inf, upper=np.inf,
                    optimize_x0: bool = True, optimize_controls: bool = True) -> "InputTrajectory":
        """Build from ``mu_x0`` (n_x,) and controls (T, n_u).

        Scalar bounds apply to the control block only and leave ``mu_x0``
        unbounded; array bounds must cover the whole stacked vector.
        """
        mu_x0 = np.asarray(mu_x0, dtype=float).ravel()
        controls = np.asarray(controls, dtype=float)
        if controls.ndim == 1:
            controls = controls[:, None]
        nx, n = mu_x0.size, controls.size
        stacked = np.concatenate([mu_x0, controls.ravel()])
        if np.ndim(lower) == 0:
            lo = np.concatenate([np.full(nx, -np.inf), np.full(n, float(lower))])
        else:
            lo = np.asarray(lower, dtype=float)
        if np.ndim(upper) == 0:
            hi = np.concatenate([np.full(nx, np.inf), np.full(n, float(upper))])
        else:
            hi = np.asarray(upper, dtype=float)
        mask = np.concatenate([np.full(nx, optimize_x0), np.full(n, optimize_controls)])
        return cls(stacked, lo, hi, mask)

    def with_stacked(self, stacked) -> "InputTrajectory":
        return InputTrajectory(stacked, self.lower, self.upper, self.opt_mask)

    def mu_x0(self, nx: int) -> np.ndarray:
        return self.stacked[:nx]

    def controls(self, nx: int, nu: int) -> np.ndarray:
        return self.stacked[nx:].reshape(-1, nu)

    def __len__(self):
        return self.stacked.size


@dataclass(frozen=True)
class StateStatistics:
    """Means, covariances and cross-covariances of ``x_0 .. x_T``.

    ``cross[t, s]`` is ``Cov(x_t, x_s)``; ``covs`` aliases its diagonal.
    ``sens`` (optional) has shape ``(n_inputs, T+1, n_x)`` with
    ``sens[i, t] = d mean[t] / d U_i``.
    """

    means: np.ndarray
    covs: np.ndarray
    cross: np.ndarray
    sens: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def T(self) -> int:
        return self.means.shape[0] - 1

    @property
    def nx(self) -> int:
        return self.means.shape[1]


def _check_inputs(dyn: LinearDynamics, noise: NoiseModel, u: InputTrajectory) -> None:
    noise.check(dyn)
    if len(u) != dyn.n_inputs:
        raise DimensionError(f"stacked input has length {len(u)}, expected {dyn.n_inputs}")


def propagate_means(dyn: LinearDynamics, u: InputTrajectory) -> np.ndarray:
    """Mean trajectory ``(T+1, n_x)`` only; ``u`` may also be a plain stacked array."""
    x = u.stacked if isinstance(u, InputTrajectory) else np.asarray(u, dtype=float)
    if x.size != dyn.n_inputs:
        raise DimensionError(f"stacked input has length {x.size}, expected {dyn.n_inputs}")
    nx, nu = dyn.nx, dyn.nu
    means = np.empty((dyn.T + 1, nx))
    means[0] = x[:nx]
    ctrl = x[nx:].reshape(dyn.T, nu) if dyn.T else None
    for t in range(dyn.T):
        means[t + 1] = dyn.A(t) @ means[t] + dyn.B(t) @ ctrl[t]
    return means


def propagate_covariances(dyn: LinearDynamics, noise: NoiseModel):
    """Return ``(covs, cross)``; these do not depend on the input."""
    noise.check(dyn)
    T, nx = dyn.T, dyn.nx
    cross = np.zeros((T + 1, T + 1, nx, nx))
    P = noise.Sigma_x0
    cross[0, 0] = P
    for t in range(T):
        A = dyn.A(t)
        # C[t+1, s] = A_t C[t, s] for s <= t
        cross[t + 1, :t + 1] = np.einsum("ij,sjk->sik", A, cross[t, :t + 1])
        P = A @ P @ A.T + noise.Sw(t)
        cross[t + 1, t + 1] = 0.5 * (P + P.T)
    # mirror the lower triangle so C[s, t] == C[t, s].T exactly
    for t in range(T + 1):
        cross[:t, t] = np.swapaxes(cross[t, :t], -1, -2)
    covs = np.array([cross[t, t] for t in range(T + 1)])
    return covs, cross


def input_sensitivity(dyn: LinearDynamics, i: int) -> np.ndarray:
    """``d mean[t] / d U_i`` for ``t = 0 .. T`` as a ``(T+1, n_x)`` array."""
    if not 0 <= i < dyn.n_inputs:
        raise IndexError(f"input coordinate {i} out of range [0, {dyn.n_inputs})")
    nx, nu = dyn.nx, dyn.nu
    out = np.zeros((dyn.T + 1, nx))
    if i < nx:
        start = 0
        out[0, i] = 1.0
    else:
        k, j = divmod(i - nx, nu)
        start = k + 1
        out[start] = dyn.B(k)[:, j]
    for t in range(start, dyn.T):
        out[t + 1] = dyn.A(t) @ out[t]
    return out


def all_input_sensitivities(dyn: LinearDynamics) -> np.ndarray:
    """Stack of :func:`input_sensitivity` for every coordinate."""
    return np.stack([input_sensitivity(dyn, i) for i in range(dyn.n_inputs)])


def propagate_state_stats(dyn: LinearDynamics, noise: NoiseModel, u: InputTrajectory,
                          with_sensitivities: bool = False) -> StateStatistics:
    _check_inputs(dyn, noise, u)
    means = propagate_means(dyn, u)
    covs, cross = propagate_covariances(dyn, noise)
    sens = all_input_sensitivities(dyn) if with_sensitivities else None
    for arr in (means, covs, cross) + ((sens,) if sens is not None else ()):
        arr.setflags(write=False)
    return StateStatistics(means=means, covs=covs, cross=cross, sens=sens)


def build_lifted_blocks(dyn: LinearDynamics, cap: int = LIFTED_CAP):
    """Explicit ``(Abar, Bbar)``; for diagnostics and small horizons only."""
    T, nx, nu = dyn.T, dyn.nx, dyn.nu
    if nx * (T + 1) > cap:
        raise MemoryError(f"lifted size n_x(T+1) = {nx * (T + 1)} exceeds cap {cap}")
    n = nx * (T + 1)
    Abar = np.zeros((n, n))
    for k in range(T + 1):
        blk = np.eye(nx)
        Abar[k * nx:(k + 1) * nx, k * nx:(k + 1) * nx] = blk
        for t in range(k + 1, T + 1):
            blk = dyn.A(t - 1) @ blk
            Abar[t * nx:(t + 1) * nx, k * nx:(k + 1) * nx] = blk
    Bbar = np.zeros((n, dyn.n_inputs))
    Bbar[:nx, :nx] = np.eye(nx)
    for k in range(T):
        Bbar[(k + 1) * nx:(k + 2) * nx, nx + k * nu:nx + (k + 1) * nu] = dyn.B(k)
    return Abar, Bbar


def lifted_block_row(Abar: np.ndarray, nx: int, t: int) -> np.ndarray:
    return Abar[t * nx:(t + 1) * nx]


def stack_dynamics(As: Sequence[np.ndarray], Bs: Sequence[np.ndarray]) -> LinearDynamics:
    return LinearDynamics(np.stack(As), np.stack(Bs))
