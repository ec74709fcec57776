# ritzkit/persistence.py
from __future__ import annotations

import json
import math
import os
import tempfile
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .domain import NetworkParams
from .dynamics import TraceRecord, TrainingTrace

# Filenames (within a run directory)
PARAMS_INIT_FILENAME = "params_init.json"
PARAMS_FINAL_FILENAME = "params_final.json"
TRACE_FILENAME = "trace.csv"
GRAM_DRIFT_FILENAME = "gram_drift.csv"
RATE_FIT_FILENAME = "rate_fit.json"
SUMMARY_FILENAME = "summary.json"
METADATA_FILENAME = "metadata.json"
COERCIVITY_FILENAME = "coercivity.json"
COLLOCATION_FILENAME = "collocation.csv"
LOG_FILENAME = "run.log"
COMPARE_FILENAME = "compare.csv"
AUDIT_FILENAME = "coercivity_audit.json"


# -----------------------------
# Atomic file helpers
# -----------------------------

def _atomic_write_text(path: str, text: str, encoding: str = "utf-8") -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(prefix=".tmp_", dir=d)
    try:
        with os.fdopen(fd, "w", encoding=encoding, newline="") as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_path, path)
    finally:
        try:
            if os.path.exists(tmp_path):
                os.remove(tmp_path)
        except OSError:
            pass


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        # JSON has no inf/nan
        return v if math.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: str, payload: Dict) -> None:
    text = json.dumps(_jsonable(payload), indent=2, ensure_ascii=False)
    _atomic_write_text(path, text + "\n")


def read_json(path: str) -> Dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _fmt(v) -> str:
    """Shortest round-trip text for floats; blank for None."""
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))


def _write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence]) -> str:
    lines: List[str] = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _atomic_write_text(path, "\n".join(lines) + "\n")
    return path


def _read_csv(path: str) -> Tuple[List[str], List[List[str]]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        raw = [line for line in f.read().splitlines() if line.strip()]
    if not raw:
        return [], []
    header = [h.strip() for h in raw[0].split(",")]
    return header, [line.split(",") for line in raw[1:]]


# -----------------------------
# Network parameters
# -----------------------------

def save_params(path: str, params: NetworkParams) -> None:
    write_json(path, params.to_dict())


def load_params(path: str) -> NetworkParams:
    return NetworkParams.from_dict(read_json(path))


# -----------------------------
# Training trace (step,time,loss,grad_norm,a_norm[,dist_to_final])
# -----------------------------

TRACE_HEADER = ["step", "time", "loss", "grad_norm", "a_norm"]


def save_trace_csv(path: str, trace: TrainingTrace) -> str:
    header = list(TRACE_HEADER)
    with_dist = trace.has_distance
    if with_dist:
        header.append("dist_to_final")
    rows = []
    for r in trace.records:
        row = [int(r.step), r.time, r.loss, r.grad_norm, r.a_norm]
        if with_dist:
            row.append(r.dist_to_final)
        rows.append(row)
    return _write_csv(path, header, rows)


def load_trace_csv(path: str) -> TrainingTrace:
    """
    Reads a trace CSV. Unknown extra columns are ignored; a missing
    dist_to_final column leaves the field empty.
    """
    header, rows = _read_csv(path)
    if not header:
        return TrainingTrace()
    missing = [c for c in TRACE_HEADER if c not in header]
    if missing:
        raise ValueError(f"trace CSV {path} lacks columns {missing}")
    idx = {c: header.index(c) for c in header}
    trace = TrainingTrace(metadata={"source": os.path.abspath(path)})
    for parts in rows:
        d = "dist_to_final" in idx and idx["dist_to_final"] < len(parts) and parts[idx["dist_to_final"]].strip()
        trace.append(TraceRecord(
            step=int(parts[idx["step"]]),
            time=float(parts[idx["time"]]),
            loss=float(parts[idx["loss"]]),
            grad_norm=float(parts[idx["grad_norm"]]),
            a_norm=float(parts[idx["a_norm"]]),
            dist_to_final=float(parts[idx["dist_to_final"]]) if d else None,
        ))
    return trace


# -----------------------------
# Gram drift (iteration,provenance,rel_drift,min_eig)
# -----------------------------

GRAM_HEADER = ["iteration", "provenance", "rel_drift", "min_eig"]


def save_gram_drift_csv(path: str, records) -> str:
    rows = [[int(r.iteration), r.provenance, r.rel_drift, r.min_eig] for r in records]
    return _write_csv(path, GRAM_HEADER, rows)


def load_gram_drift_csv(path: str) -> List[Dict]:
    header, rows = _read_csv(path)
    out: List[Dict] = []
    for parts in rows:
        d = dict(zip(header, parts))
        out.append({
            "iteration": int(d["iteration"]),
            "provenance": d["provenance"],
            "rel_drift": float(d["rel_drift"]),
            "min_eig": float(d["min_eig"]) if d.get("min_eig", "").strip() else None,
        })
    return out


# -----------------------------
# Collocation / reference grids / comparison tables
# -----------------------------

def save_collocation_csv(path: str, collocation) -> str:
    d = collocation.d
    header = [f"x{i}" for i in range(d)] + ["region", "weight"]
    rows = [list(coords) + [region, wt] for coords, region, wt in collocation.rows()]
    return _write_csv(path, header, rows)


def save_reference_grid_csv(path: str, rows: Sequence[Tuple[float, float, float]]) -> str:
    return _write_csv(path, ["t", "x", "u"], rows)


COMPARE_HEADER = ["slice", "points", "l2_error", "linf_error", "ref_linf"]


def save_compare_csv(path: str, rows: Sequence[Sequence]) -> str:
    return _write_csv(path, COMPARE_HEADER, rows)


def load_compare_csv(path: str) -> List[Dict]:
    header, rows = _read_csv(path)
    out = []
    for parts in rows:
        d = dict(zip(header, parts))
        out.append({
            "slice": float(d["slice"]),
            "points": int(d["points"]),
            "l2_error": float(d["l2_error"]),
            "linf_error": float(d["linf_error"]),
            "ref_linf": float(d["ref_linf"]),
        })
    return out


# -----------------------------
# Run directory
# -----------------------------

def run_path(run_dir: str, filename: str) -> str:
    return os.path.join(run_dir, filename)


def load_run_params(run_dir: str) -> Optional[NetworkParams]:
    """params_final.json of a run, or None when the run has not written it."""
    path = run_path(run_dir, PARAMS_FINAL_FILENAME)
    if not os.path.exists(path):
        return None
    return load_params(path)
