"""JSON experiment configuration with schema validation and defaults."""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Union

import jsonschema
import numpy as np

from . import constants as C
from .active import OptimizeOptions
from .dbs import FourierBasis
from .lifted import InputTrajectory, LinearDynamics, NoiseModel
from .model import (DEFAULT_DT, DEFAULT_INPUT_BOUND, DEFAULT_INPUT_FREQS, DEFAULT_INPUT_GAIN, DEFAULT_MU_X0,
                    DEFAULT_SIGMA_V_SQ, DEFAULT_SIGMA_W_SQ, DEFAULT_THETA_RANGE, WienerModel, sinusoid_controls)
from .sim import GaussianPrior, PriorSpec, UniformPrior

SCHEMA_VERSION = 1
EXECUTION_KEYS = ("threads", "output", "format")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


_num = {"type": "number"}
_matrix = {"type": "array", "items": {"type": "array", "items": _num, "minItems": 1}, "minItems": 1}
_vector = {"type": "array", "items": _num, "minItems": 1}


def _obj(props: Dict[str, Any]) -> Dict[str, Any]:
    return {"type": "object", "properties": props, "additionalProperties": False}


SCHEMA: Dict[str, Any] = _obj({
    "version": {"const": SCHEMA_VERSION},
    "model": _obj({
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "A": {"anyOf": [_matrix, {"type": "null"}]},
        "B": {"anyOf": [_matrix, {"type": "null"}]},
        "horizon": {"type": "integer", "minimum": 0},
        "sigma_v_sq": {"type": "number", "exclusiveMinimum": 0},
        "sigma_w_sq": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "sigma_x0_sq": {"anyOf": [{"type": "number", "minimum": 0}, {"type": "null"}]},
    }),
    "basis": _obj({"frequencies": {"anyOf": [_matrix, {"type": "null"}]}}),
    "prior": _obj({
        "kind": {"enum": ["uniform", "gaussian"]},
        "a": _num, "b": _num,
        "mu": {"anyOf": [_vector, {"type": "null"}]},
        "Sigma": {"anyOf": [_matrix, {"type": "null"}]},
    }),
    "input": _obj({
        "mu_x0": _vector,
        "sinusoid": _obj({
            "freqs": _vector,
            "gain": _num,
            "time_scale": {"enum": ["seconds", "index"]},
        }),
        "samples": {"anyOf": [_matrix, {"type": "null"}]},
        "bound": {"type": "number", "exclusiveMinimum": 0},
        "optimize_x0": {"type": "boolean"},
    }),
    "optimizer": _obj({
        "max_iters": {"type": "integer", "minimum": 0},
        "grad_tol": {"type": "number", "minimum": 0},
        "rel_tol": {"type": "number", "minimum": 0},
        "stall_window": {"type": "integer", "minimum": 1},
        "max_halvings": {"type": "integer", "minimum": 0},
        "alpha0": {"type": "number", "exclusiveMinimum": 0},
    }),
    "run": _obj({
        "benchmark": {"anyOf": [{"enum": [1, 2, 3, 4]}, {"type": "null"}]},
        "n_reps": {"type": "integer", "minimum": 1},
        "pilot_reps": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "lambda_grid": _obj({
            "lo": {"type": "number", "exclusiveMinimum": 0},
            "hi": {"type": "number", "exclusiveMinimum": 0},
            "n": {"type": "integer", "minimum": 1},
        }),
        "horizons": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "taus": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "total_samples": {"type": "integer", "minimum": 1},
        "crossed": {"type": "boolean"},
        "threads": {"type": "integer", "minimum": 1},
        "output": {"type": "string"},
        "format": {"enum": ["csv", "json", "both"]},
    }),
})

DEFAULTS: Dict[str, Any] = {
    "version": SCHEMA_VERSION,
    "model": {"dt": DEFAULT_DT, "A": None, "B": None, "horizon": 100, "sigma_v_sq": DEFAULT_SIGMA_V_SQ,
              "sigma_w_sq": list(DEFAULT_SIGMA_W_SQ), "sigma_x0_sq": None},
    "basis": {"frequencies": None},
    "prior": {"kind": "uniform", "a": DEFAULT_THETA_RANGE[0], "b": DEFAULT_THETA_RANGE[1], "mu": None, "Sigma": None},
    "input": {"mu_x0": list(DEFAULT_MU_X0),
              "sinusoid": {"freqs": list(DEFAULT_INPUT_FREQS), "gain": DEFAULT_INPUT_GAIN, "time_scale": "seconds"},
              "samples": None, "bound": DEFAULT_INPUT_BOUND, "optimize_x0": False},
    "optimizer": {"max_iters": C.MAX_ITERS, "grad_tol": C.GRAD_TOL, "rel_tol": C.REL_DECREASE_TOL,
                  "stall_window": C.STALL_WINDOW, "max_halvings": C.MAX_HALVINGS, "alpha0": C.ALPHA0},
    "run": {"benchmark": None, "n_reps": 100, "pilot_reps": 200, "seed": 0,
            "lambda_grid": {"lo": C.LAMBDA_GRID_LO, "hi": C.LAMBDA_GRID_HI, "n": C.LAMBDA_GRID_POINTS},
            "horizons": [5, 10, 20, 40, 80], "taus": [1, 11, 101], "total_samples": 101,
            "crossed": False, "threads": 1, "output": "results", "format": "both"},
}


def _merge(base: Dict[str, Any], over: Dict[str, Any]) -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _path(err: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated configuration with every default filled in."""

    data: Dict[str, Any]

    def __getitem__(self, key):
        return self.data[key]

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        """SHA-256 of the settings that influence results.

        Execution-only entries (thread count, output location and format) are
        left out so that equivalent runs carry the same hash.
        """
        data = copy.deepcopy(self.data)
        for k in EXECUTION_KEYS:
            data["run"].pop(k, None)
        return hashlib.sha256(json.dumps(data, sort_keys=True, separators=(",", ":")).encode()).hexdigest()

    def replace_run(self, **kw) -> "ExperimentConfig":
        """Copy with entries of the ``run`` block overridden (``None`` values are ignored)."""
        kw = {k: v for k, v in kw.items() if v is not None}
        return from_dict(_merge(self.data, {"run": kw}))

    # builders -----------------------------------------------------------
    def basis(self) -> FourierBasis:
        f = self["basis"]["frequencies"]
        return FourierBasis.default_grid() if f is None else FourierBasis(np.array(f, dtype=float))

    def dynamics(self, T: int) -> LinearDynamics:
        m = self["model"]
        A = np.eye(2) if m["A"] is None else np.array(m["A"], dtype=float)
        B = m["dt"] * np.eye(A.shape[0]) if m["B"] is None else np.array(m["B"], dtype=float)
        return LinearDynamics.lti(A, B, T)

    def prior_spec(self, dim: int) -> PriorSpec:
        p = self["prior"]
        if p["kind"] == "uniform":
            return UniformPrior(float(p["a"]), float(p["b"]), dim)
        return GaussianPrior(np.array(p["mu"], dtype=float), np.array(p["Sigma"], dtype=float))

    def model(self, sigma_w_sq: float, T: Optional[int] = None) -> WienerModel:
        m = self["model"]
        T = m["horizon"] if T is None else T
        dyn = self.dynamics(T)
        basis = self.basis()
        noise = NoiseModel.isotropic(dyn.nx, T, sigma_w_sq, m["sigma_v_sq"], m["sigma_x0_sq"])
        return WienerModel(dyn, noise, basis, self.prior_spec(basis.size).implied())

    def controls(self, T: int, nu: int) -> np.ndarray:
        i = self["input"]
        if i["samples"] is not None:
            s = np.array(i["samples"], dtype=float)
            if s.shape[0] < T or s.shape[1] != nu:
                raise ConfigError(f"input/samples: need at least {T} rows of width {nu}, got {s.shape}")
            return s[:T]
        sp = i["sinusoid"]
        dt = self["model"]["dt"] if sp["time_scale"] == "seconds" else None
        c = sinusoid_controls(T, sp["freqs"], sp["gain"], dt)
        if nu != 2:
            raise ConfigError(f"input/sinusoid: produces 2 channels but the model has {nu}; give input/samples")
        return c

    def input(self, T: int, optimize_controls: bool = True) -> InputTrajectory:
        i = self["input"]
        dyn = self.dynamics(T)
        return InputTrajectory.from_blocks(i["mu_x0"], self.controls(T, dyn.nu).reshape(T, dyn.nu),
                                           -i["bound"], i["bound"], optimize_x0=i["optimize_x0"],
                                           optimize_controls=optimize_controls)

    def optimize_options(self) -> OptimizeOptions:
        return OptimizeOptions(**self["optimizer"])

    def lambda_grid(self) -> np.ndarray:
        g = self["run"]["lambda_grid"]
        return np.logspace(np.log10(g["lo"]), np.log10(g["hi"]), g["n"])


def _check_consistency(cfg: ExperimentConfig) -> None:
    m, i, p = cfg["model"], cfg["input"], cfg["prior"]
    try:
        basis = cfg.basis()
    except ValueError as exc:
        raise ConfigError(f"basis/frequencies: {exc}") from None
    nx = 2 if m["A"] is None else len(m["A"])
    if m["A"] is not None and any(len(r) != nx for r in m["A"]):
        raise ConfigError("model/A: must be square")
    if m["B"] is not None and len(m["B"]) != nx:
        raise ConfigError(f"model/B: needs {nx} rows")
    if basis.nx != nx:
        raise ConfigError(f"basis/frequencies: vectors have dimension {basis.nx}, state has {nx}")
    if len(i["mu_x0"]) != nx:
        raise ConfigError(f"input/mu_x0: length {len(i['mu_x0'])} != state dimension {nx}")
    if p["kind"] == "uniform":
        if not p["a"] < p["b"]:
            raise ConfigError(f"prior: uniform bounds need a < b, got a={p['a']}, b={p['b']}")
    else:
        if p["mu"] is None or p["Sigma"] is None:
            raise ConfigError("prior: gaussian prior needs mu and Sigma")
        if len(p["mu"]) != basis.size or np.shape(p["Sigma"]) != (basis.size, basis.size):
            raise ConfigError(f"prior: gaussian mu/Sigma must match basis size {basis.size}")
    try:
        cfg.dynamics(1)
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from None
    run = cfg["run"]
    if run["crossed"] and math.isqrt(run["n_reps"]) ** 2 != run["n_reps"]:
        raise ConfigError(f"run/n_reps: crossed replicates need a square count, got {run['n_reps']}")
    if cfg["run"]["lambda_grid"]["lo"] > cfg["run"]["lambda_grid"]["hi"]:
        raise ConfigError("run/lambda_grid: lo must not exceed hi")


def from_dict(raw: Dict[str, Any]) -> ExperimentConfig:
    """Validate ``raw`` against :data:`SCHEMA`, then apply defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>: config must be a JSON object")
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(f"{_path(e)}: {e.message}")
    cfg = ExperimentConfig(_merge(DEFAULTS, raw))
    _check_consistency(cfg)
    return cfg


def parse_config(path: Optional[Union[str, Path]]) -> ExperimentConfig:
    """Read a JSON config file; ``None`` gives the defaults."""
    if path is None:
        return from_dict({})
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    if not text.strip():
        return from_dict({})
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return from_dict(raw)
