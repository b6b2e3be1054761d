"""Byte-stable CSV tables and JSON summaries."""
from __future__ import annotations

import csv
import json
import math
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from .benchmarks import BenchmarkResult
from .config import ExperimentConfig

FLOAT_FORMAT = ".17g"


def library_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def format_cell(v: Any) -> str:
    """Integers verbatim; floats with 17 significant digits; strings as-is."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), FLOAT_FORMAT)
    return str(v)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def summary_document(result: BenchmarkResult, cfg: ExperimentConfig) -> Dict[str, Any]:
    return _jsonable({
        "benchmark": result.benchmark,
        "config_hash": cfg.hash,
        "seed": cfg["run"]["seed"],
        "version": library_version(),
        "columns": result.columns,
        "n_rows": len(result.rows),
        "summary": result.summary,
        "failures": result.failures,
        "config": cfg.data,
    })


def write_csv(result: BenchmarkResult, path: Path, cfg: ExperimentConfig) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# benchmark={result.benchmark} config_hash={cfg.hash} seed={cfg['run']['seed']}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(result.columns)
        for row in result.rows:
            w.writerow([format_cell(v) for v in row])


def read_csv(path) -> List[Dict[str, str]]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def emit_results(result: BenchmarkResult, out_dir, fmt: str, cfg: ExperimentConfig) -> List[Path]:
    """Write ``benchmark<k>.csv`` and/or ``benchmark<k>.json`` under ``out_dir``.

    A ``failures.json`` manifest is added when any replicate failed.
    """
    if fmt not in ("csv", "json", "both"):
        raise ValueError(f"format must be csv, json or both, got {fmt!r}")
    if not result.rows and not result.summary:
        raise ValueError("nothing to write")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"benchmark{result.benchmark}"
    paths = []
    if fmt in ("csv", "both"):
        p = out / f"{stem}.csv"
        write_csv(result, p, cfg)
        paths.append(p)
    if fmt in ("json", "both"):
        p = out / f"{stem}.json"
        write_json(summary_document(result, cfg), p)
        paths.append(p)
    if result.failures:
        p = out / "failures.json"
        write_json(_jsonable({"benchmark": result.benchmark, "config_hash": cfg.hash,
                              "seed": cfg["run"]["seed"], "failures": result.failures}), p)
        paths.append(p)
    return paths


def write_json(doc: Dict[str, Any], path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")


def load_summary(path) -> Dict[str, Any]:
    return json.loads(Path(path).read_text())
