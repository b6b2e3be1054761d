"""Seeded trajectory simulation and a Monte Carlo harness with common random numbers.

Every replicate owns three independent streams (theta, process noise,
measurement noise) derived from ``(master_seed, replicate, stream)`` through
:class:`numpy.random.SeedSequence` spawn keys, so results do not depend on
worker scheduling.  Noise is drawn in standardized form and shared by every
method evaluated on the replicate.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .estimators import EstimatorGain
from .lifted import InputTrajectory, NoiseModel, propagate_means, psd_sqrt
from .model import WienerModel
from .prior import ParameterPrior

STREAMS = {"theta": 0, "process": 1, "measurement": 2}


@dataclass(frozen=True)
class SimSeed:
    master_seed: int
    replicate_index: int = 0

    def generator(self, stream: str) -> np.random.Generator:
        if stream not in STREAMS:
            raise KeyError(f"unknown stream {stream!r}; expected one of {sorted(STREAMS)}")
        ss = np.random.SeedSequence(entropy=int(self.master_seed) & (2**64 - 1),
                                    spawn_key=(int(self.replicate_index), STREAMS[stream]))
        return np.random.default_rng(ss)


@dataclass(frozen=True)
class UniformPrior:
    """I.i.d. ``U(a, b)`` components."""

    a: float
    b: float
    dim: int

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"uniform prior needs a < b, got a={self.a}, b={self.b}")

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        shape = (self.dim,) if size is None else (size, self.dim)
        return rng.uniform(self.a, self.b, size=shape)

    def implied(self) -> ParameterPrior:
        return ParameterPrior.isotropic(self.dim, 0.5 * (self.a + self.b), (self.b - self.a) ** 2 / 12.0)


@dataclass(frozen=True)
class GaussianPrior:
    mu: np.ndarray
    Sigma: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.mu)

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        L = psd_sqrt(np.asarray(self.Sigma, dtype=float))
        n = 1 if size is None else size
        z = rng.standard_normal((n, self.dim))
        out = np.asarray(self.mu, dtype=float) + z @ L.T
        return out[0] if size is None else out

    def implied(self) -> ParameterPrior:
        return ParameterPrior(self.mu, self.Sigma)


PriorSpec = Union[UniformPrior, GaussianPrior]


def sample_prior_theta(spec: PriorSpec, seed: SimSeed) -> np.ndarray:
    return spec.sample(seed.generator("theta"))


@dataclass(frozen=True)
class MeasurementSet:
    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.ndim != 1 or not np.all(np.isfinite(y)):
            raise ValueError("measurements must be a finite 1-D vector")
        object.__setattr__(self, "y", y)


def _noise_roots(noise: NoiseModel, T: int):
    L0 = psd_sqrt(noise.Sigma_x0)
    Lw = [psd_sqrt(noise.Sw(k)) for k in range(T)] if len(noise.Sigma_w) != 1 else [psd_sqrt(noise.Sigma_w[0])] * T
    return L0, Lw


def simulate_from_normals(model: WienerModel, u: InputTrajectory, theta, z_w, z_v):
    """Trajectories driven by given standard-normal draws.

    ``theta`` is ``(R, N+1)``, ``z_w`` is ``(R, T+1, n_x)`` (row 0 perturbs
    the initial state) and ``z_v`` is ``(R, T+1)``.  Returns states
    ``(R, T+1, n_x)`` and outputs ``(R, T+1)``.
    """
    dyn, noise = model.dynamics, model.noise
    T = dyn.T
    theta = np.atleast_2d(theta)
    z_w = np.asarray(z_w, dtype=float).reshape(theta.shape[0], T + 1, dyn.nx)
    z_v = np.asarray(z_v, dtype=float).reshape(theta.shape[0], T + 1)
    L0, Lw = _noise_roots(noise, T)
    means = propagate_means(dyn, u)
    ctrl = u.controls(dyn.nx, dyn.nu)
    x = np.empty_like(z_w)
    x[:, 0] = means[0] + z_w[:, 0] @ L0.T
    for t in range(T):
        x[:, t + 1] = x[:, t] @ dyn.A(t).T + dyn.B(t) @ ctrl[t] + z_w[:, t + 1] @ Lw[t].T
    phi = model.basis.evaluate(x)                                   # (R, T+1, N+1)
    y = np.einsum("rtn,rn->rt", phi, theta) + z_v * np.sqrt(noise.sigma_v_sq)
    return x, y


def draw_normals(seed: SimSeed, T: int, nx: int):
    z_w = seed.generator("process").standard_normal((T + 1, nx))
    z_v = seed.generator("measurement").standard_normal(T + 1)
    return z_w, z_v


def simulate_trajectory(model: WienerModel, u: InputTrajectory, seed: SimSeed, theta):
    """One seeded trajectory for a given ``theta``: ``(states, MeasurementSet)``."""
    if model.noise.kind != "gaussian":
        raise ValueError("simulation supports Gaussian noise only")
    z_w, z_v = draw_normals(seed, model.T, model.dynamics.nx)
    x, y = simulate_from_normals(model, u, np.asarray(theta, dtype=float)[None], z_w[None], z_v[None])
    return x[0], MeasurementSet(y[0])


@dataclass(frozen=True)
class LinearMethod:
    """An estimator ``theta_hat = L @ y + b`` applied to data generated with input ``u``.

    ``u`` may also be a :class:`~wienerbayes.multitraj.MultiTrajectoryPlan`,
    in which case the data are the stacked measurements of all its batches.
    """

    name: str
    u: object
    L: np.ndarray
    b: np.ndarray

    @classmethod
    def from_gain(cls, name: str, u, gain: EstimatorGain) -> "LinearMethod":
        return cls(name, u, gain.Psi, gain.psi)

    @classmethod
    def from_matrix(cls, name: str, u, L) -> "LinearMethod":
        L = np.asarray(L, dtype=float)
        return cls(name, u, L, np.zeros(L.shape[0]))


@dataclass
class ReplicateResult:
    replicate: int
    theta_true: np.ndarray
    estimates: Dict[str, np.ndarray]
    squared_errors: Dict[str, float]
    error: Optional[str] = None

    def recompute_errors(self) -> Dict[str, float]:
        return {k: float(np.sum((self.theta_true - v) ** 2)) for k, v in self.estimates.items()}


def replicate_indices(r: int, n_reps: int, crossed: bool) -> Tuple[int, int]:
    """``(theta_index, noise_index)`` for replicate ``r``.

    In crossed mode ``n_reps`` must be a perfect square ``n*n`` and replicate
    ``r`` pairs theta sample ``r // n`` with noise sample ``r % n``.
    """
    if not crossed:
        return r, r
    n = math.isqrt(n_reps)
    if n * n != n_reps:
        raise ValueError(f"crossed replicates need a square count, got {n_reps}")
    return r // n, r % n


def _rows_needed(model: WienerModel, m: "LinearMethod") -> int:
    total = getattr(m.u, "total_length", None)
    return model.T + 1 if total is None else total


def _simulate_method(model: WienerModel, m: "LinearMethod", theta, z_w, z_v) -> np.ndarray:
    if isinstance(m.u, InputTrajectory):
        n = model.T + 1
        return simulate_from_normals(model, m.u, theta, z_w[:, :n], z_v[:, :n])[1]
    from .multitraj import simulate_plan_from_normals
    return simulate_plan_from_normals(m.u, model.basis, model.prior, theta, z_w, z_v)


def _run_chunk(model, methods, prior_spec, seed, idx, n_reps, crossed):
    nx = model.dynamics.nx
    rows = max(_rows_needed(model, m) for m in methods)
    thetas, zws, zvs = [], [], []
    for r in idx:
        ti, ni = replicate_indices(r, n_reps, crossed)
        thetas.append(sample_prior_theta(prior_spec, SimSeed(seed, ti)))
        z_w, z_v = draw_normals(SimSeed(seed, ni), rows - 1, nx)
        zws.append(z_w)
        zvs.append(z_v)
    theta = np.array(thetas)
    z_w, z_v = np.array(zws), np.array(zvs)
    ests = {}
    cache = {}
    for m in methods:
        key = id(m.u)
        if key not in cache:
            cache[key] = _simulate_method(model, m, theta, z_w, z_v)
        ests[m.name] = cache[key] @ m.L.T + m.b
    out = []
    for j, r in enumerate(idx):
        e = {k: v[j] for k, v in ests.items()}
        se = {k: float(np.sum((theta[j] - v) ** 2)) for k, v in e.items()}
        bad = [k for k, v in e.items() if not np.all(np.isfinite(v))]
        out.append(ReplicateResult(r, theta[j], e, se, f"non-finite estimate for {bad}" if bad else None))
    return out


def monte_carlo_benchmark(model: WienerModel, methods: Sequence[LinearMethod], n_reps: int, seed: int,
                          prior_spec: Optional[PriorSpec] = None, crossed: bool = False,
                          threads: int = 1, chunk: int = 256) -> List[ReplicateResult]:
    """Evaluate every method on identical ``(theta, W, V)`` per replicate.

    Noise rows are drawn once per replicate at the largest length any method
    needs; shorter designs use a prefix, so realizations are shared across
    horizons and batch layouts as well as across methods.

    Replicates are processed in fixed chunks; results come back in replicate
    order whatever the thread count.  A failing chunk is retried replicate by
    replicate so that only the offending replicates carry an error.
    """
    if prior_spec is None:
        mu = model.prior.mu
        prior_spec = GaussianPrior(mu, model.prior.Sigma)
    chunks = [list(range(s, min(s + chunk, n_reps))) for s in range(0, n_reps, chunk)]

    def work(idx):
        try:
            return _run_chunk(model, methods, prior_spec, seed, idx, n_reps, crossed)
        except (ValueError, FloatingPointError, np.linalg.LinAlgError):
            res = []
            for r in idx:
                try:
                    res.extend(_run_chunk(model, methods, prior_spec, seed, [r], n_reps, crossed))
                except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
                    res.append(ReplicateResult(r, np.full(model.prior.dim, np.nan), {}, {}, repr(exc)))
            return res

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    return [r for p in parts for r in p]


def nearest_rank(values, p: float) -> float:
    """Nearest-rank percentile: the ``ceil(p/100 n)``-th smallest value."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("no values")
    k = max(1, math.ceil(p / 100.0 * v.size))
    return float(v[k - 1])


def summarize(results: Sequence[ReplicateResult]) -> Dict[str, Dict[str, float]]:
    """Per-method mean squared error and 20th/80th nearest-rank percentiles."""
    ok = [r for r in results if r.error is None]
    names = list(ok[0].squared_errors) if ok else []
    out = {}
    for k in names:
        se = np.array([r.squared_errors[k] for r in ok])
        out[k] = {"mse": float(se.mean()), "se": float(se.std(ddof=1) / np.sqrt(se.size)) if se.size > 1 else 0.0,
                  "p20": nearest_rank(se, 20), "p80": nearest_rank(se, 80), "n": int(se.size)}
    return out
