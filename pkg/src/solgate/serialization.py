"""Trajectory CSV and JSON report files, written atomically."""
from __future__ import annotations

import dataclasses
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .analysis import CriticalPoint, InstantonRecord
from .dynamics import Trajectory

TRAJECTORY_HEADER = "t,v1,v2,v3,x1,x2,x3,x4,x5"


def atomic_write(path, text: str, force: bool = False) -> Path:
    """Write ``text`` through a temporary file in the target directory, then rename."""
    path = Path(path)
    if path.exists() and not force:
        raise FileExistsError(f"{path} exists (use force to overwrite)")
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def format_table(header: str, rows) -> str:
    lines = [header]
    lines += [",".join(_fmt(float(v)) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def write_trajectory(traj: Trajectory, path, force: bool = False) -> Path:
    """CSV with columns ``t,v1,v2,v3,x1..x5`` at 17 significant digits."""
    if len(traj) > 1 and not np.all(np.diff(traj.times) > 0):
        raise ValueError("times must be strictly increasing")
    v1 = np.full(len(traj), traj.v1)
    rows = np.column_stack([traj.times, v1, traj.states])
    return atomic_write(path, format_table(TRAJECTORY_HEADER, rows), force)


def read_trajectory(path) -> Trajectory:
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip()
    if header != TRAJECTORY_HEADER:
        raise ValueError(f"{path}: unexpected header {header!r}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    v1 = np.unique(data[:, 1])
    if len(v1) > 1:
        raise ValueError(f"{path}: v1 is not constant")
    return Trajectory(data[:, 0], data[:, 2:], float(v1[0]) if len(v1) else 0.0,
                      {"source": str(path)})


def eigen_pairs(values) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(values, dtype=complex)]


def critical_point_record(cp: CriticalPoint) -> dict:
    return {
        "state": {"v1": cp.state.v1, "v2": cp.state.v2, "v3": cp.state.v3,
                  "x": cp.state.x.tolist()},
        "residual": cp.residual_norm,
        "eigenvalues": eigen_pairs(cp.eigenvalues),
        "signature": cp.signature,
        "zero_tol": cp.zero_tol,
        "jordan_defect": cp.jordan_defect,
        "unstable_directions": cp.n_unstable,
        "label": cp.label,
    }


def instanton_record(rec: InstantonRecord) -> dict:
    return {
        "start": critical_point_record(rec.start),
        "end": critical_point_record(rec.end),
        "window": [rec.t_enter, rec.t_exit],
        "peak_voltages": [rec.peak_v2, rec.peak_v3],
    }


def to_jsonable(obj):
    """Recursively convert numpy values, complex numbers and dataclasses."""
    if isinstance(obj, CriticalPoint):
        return critical_point_record(obj)
    if isinstance(obj, InstantonRecord):
        return instanton_record(obj)
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return to_jsonable(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return eigen_pairs(obj.ravel())
        return to_jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def make_report(config: dict | None = None, seed: int | None = None, critical_points=(),
                instantons=(), tables: dict | None = None, **extra) -> dict:
    from . import __version__

    doc = {
        "tool": {"name": "solgate", "version": __version__},
        "seed": seed,
        "config": config or {},
        "critical_points": [critical_point_record(cp) for cp in critical_points],
        "instantons": [instanton_record(r) for r in instantons],
        "tables": tables or {},
    }
    doc.update(extra)
    return to_jsonable(doc)


def write_report(report: dict, path, force: bool = False) -> Path:
    return atomic_write(path, json.dumps(to_jsonable(report), indent=2) + "\n", force)


def read_report(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
