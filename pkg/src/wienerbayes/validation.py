"""Runtime invariant checks on randomly generated instances.

Each check returns a :class:`CheckResult` with the worst observed
discrepancy, so the command line can report a one-line verdict per property.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np

from . import constants as C
from .active import ErrorObjective
from .dbs import FourierBasis, covariance_tensor, mean_matrix
from .estimators import bayes_gain, error_path
from .lifted import InputTrajectory, LinearDynamics, NoiseModel
from .model import WienerModel
from .prior import ParameterPrior


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} {self.name}: worst={self.worst:.3e} tol={self.tolerance:.1e}"


def random_instance(rng: np.random.Generator, T: int, N: int = 4, nx: int = 2, nu: int = 2,
                    sigma_w_sq=None, sigma_x0_sq=None) -> Tuple[WienerModel, InputTrajectory]:
    """A random LTI Wiener model with a Gaussian prior and a random input."""
    A = rng.normal(size=(nx, nx))
    A *= rng.uniform(0.5, 1.1) / max(abs(np.linalg.eigvals(A)))
    B = rng.normal(scale=0.3, size=(nx, nu))
    dyn = LinearDynamics.lti(A, B, T)
    sw = rng.uniform(1e-3, 5e-2) if sigma_w_sq is None else sigma_w_sq
    s0 = rng.uniform(1e-3, 5e-2) if sigma_x0_sq is None else sigma_x0_sq
    noise = NoiseModel.isotropic(nx, T, sw, rng.uniform(5e-3, 5e-2), s0)
    freqs = np.vstack([np.zeros(nx), rng.normal(scale=1.0, size=(N, nx))])
    basis = FourierBasis(freqs)
    L = rng.normal(scale=0.5, size=(N + 1, N + 1))
    prior = ParameterPrior(rng.normal(size=N + 1), L @ L.T + 0.5 * np.eye(N + 1))
    u = InputTrajectory.from_blocks(rng.normal(size=nx), rng.normal(size=(T, nu)))
    return WienerModel(dyn, noise, basis, prior), u


def finite_difference_gradient(obj: ErrorObjective, u: InputTrajectory, h: float = 1e-5) -> np.ndarray:
    x = u.stacked
    out = np.zeros(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        out[i] = (obj.value(u.with_stacked(x + e)) - obj.value(u.with_stacked(x - e))) / (2 * h)
    return out


def complex_sum_covariance(basis: FourierBasis, stats, t: int, s: int) -> np.ndarray:
    """Basis covariance between times ``t`` and ``s`` from the exponential expansion.

    Each ``2 cos(f.x)`` is written as ``exp(i f.x) + exp(-i f.x)`` and every
    product of exponentials is averaged with the Gaussian characteristic
    function.  Returns the complex ``(N+1, N+1)`` result; its imaginary part
    must vanish.
    """
    F = np.asarray(basis.frequencies, dtype=float)
    mt, ms = stats.means[t], stats.means[s]
    Ctt, Css, Cts = stats.cross[t, t], stats.cross[s, s], stats.cross[t, s]
    n = F.shape[0]
    out = np.zeros((n, n), dtype=complex)
    for m in range(n):
        for k in range(n):
            signs_m = (1,) if m == 0 else (1, -1)
            signs_k = (1,) if k == 0 else (1, -1)
            joint = 0j
            mean_m = 0j
            mean_k = 0j
            for a in signs_m:
                g = a * F[m]
                mean_m += np.exp(1j * g @ mt - 0.5 * g @ Ctt @ g)
            for b in signs_k:
                h = b * F[k]
                mean_k += np.exp(1j * h @ ms - 0.5 * h @ Css @ h)
            for a in signs_m:
                for b in signs_k:
                    g, h = a * F[m], b * F[k]
                    var = g @ Ctt @ g + h @ Css @ h + 2.0 * g @ Cts @ h
                    joint += np.exp(1j * (g @ mt + h @ ms) - 0.5 * var)
            out[m, k] = joint - mean_m * mean_k
    return out


def check_gradients(rng, n: int = 20) -> CheckResult:
    worst = 0.0
    for _ in range(n):
        model, u = random_instance(rng, int(rng.integers(1, 13)))
        obj = ErrorObjective(model)
        g = obj.value_and_gradient(u)[1]
        fd = finite_difference_gradient(obj, u)
        worst = max(worst, np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-300))
    return CheckResult("gradient vs central differences", worst < 1e-6, worst, 1e-6)


def check_monotone(rng, n: int = 100) -> CheckResult:
    worst = -np.inf
    for _ in range(n):
        model, u = random_instance(rng, int(rng.integers(1, 25)))
        path = error_path(model.design(u), model.prior, model.noise.sigma_v_sq)
        worst = max(worst, float(np.max(np.diff(path))) if path.size > 1 else -np.inf)
    return CheckResult("error non-increasing in horizon", worst <= 1e-12, max(worst, 0.0), 1e-12)


def check_forms(rng, n: int = 20) -> List[CheckResult]:
    w_inv = w_tr = w_cs = w_im = 0.0
    for _ in range(n):
        model, u = random_instance(rng, int(rng.integers(1, 10)))
        d = model.design(u)
        gd = bayes_gain(d, model.prior, model.noise.sigma_v_sq)
        gi = bayes_gain(d, model.prior, model.noise.sigma_v_sq, form="information")
        w_inv = max(w_inv, abs(gd.J - gi.J) / gd.J)
        w_tr = max(w_tr, abs(np.trace(gd.Sigma_pos) - gd.J))
        stats = model.statistics(u)
        S = covariance_tensor(model.basis, stats)
        for _k in range(3):
            t, s = (int(v) for v in rng.integers(0, model.T + 1, size=2))
            cs = complex_sum_covariance(model.basis, stats, t, s)
            w_cs = max(w_cs, float(np.max(np.abs(cs.real - S[:, :, t, s]))))
            w_im = max(w_im, float(np.max(np.abs(cs.imag))))
    return [CheckResult("information form vs data form (relative)", w_inv < 1e-8, w_inv, 1e-8),
            CheckResult("trace of posterior covariance vs J", w_tr < C.EQUIV_TOL, w_tr, C.EQUIV_TOL),
            CheckResult("complex-sum covariance vs real form", w_cs < 1e-12, w_cs, 1e-12),
            CheckResult("complex-sum imaginary residue", w_im < 1e-12, w_im, 1e-12)]


def check_conjugate(rng, n: int = 20) -> CheckResult:
    worst = 0.0
    for _ in range(n):
        model, u = random_instance(rng, int(rng.integers(1, 15)), sigma_w_sq=0.0, sigma_x0_sq=0.0)
        gain = model.gain(u)
        Phi = model.basis.evaluate(model.statistics(u).means).T
        sv = model.noise.sigma_v_sq
        y = rng.normal(size=model.T + 1) * 3
        P = model.prior
        Si = np.linalg.inv(P.Sigma)
        post = np.linalg.solve(Si + (Phi / sv) @ Phi.T, Si @ P.mu + Phi @ (y / sv))
        worst = max(worst, float(np.max(np.abs(gain.estimate(y) - post))))
    return CheckResult("conjugate Gaussian posterior mean", worst < 1e-10, worst, 1e-10)


def run_all(seed: int = 0) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    checks: List[Callable] = [check_gradients, check_monotone]
    out = [c(rng) for c in checks]
    out += check_forms(rng)
    out.append(check_conjugate(rng))
    return out
