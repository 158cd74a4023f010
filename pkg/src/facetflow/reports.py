"""File output: profiles, diagnostics CSV, snapshots and JSON reports.

Floats are written with 17 significant digits (text files) or as the
shortest round-tripping repr (JSON), so values survive a write/read cycle
exactly.  Wall-clock time is kept out of every file so reruns are
byte-identical.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .evolve import TrajectoryReport
from .model import Grid, ModelError, Profile

CSV_HEADER = "step,time,ut_sup,tv_slope,l2_to_target,n_facets"


class OutputError(OSError):
    pass


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def format_profile(u: Profile) -> str:
    return "".join(f"{x:.17g} {v:.17g}\n" for x, v in zip(u.x, u.values))


def write_profile(u: Profile, path) -> Path:
    path = Path(path)
    _write(path, format_profile(u))
    return path


def read_profile(path) -> Profile:
    """Read a two-column ``x u`` file on a uniform grid over [0, 1]."""
    path = Path(path)
    try:
        data = np.loadtxt(path, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ModelError(f"cannot read profile {path}: {exc}") from exc
    if data.shape[1] != 2 or data.shape[0] < 5:
        raise ModelError(f"profile {path} needs two columns and at least 5 rows")
    grid = Grid(data.shape[0] - 1)
    if np.max(np.abs(data[:, 0] - grid.x)) > 1e-9:
        raise ModelError(f"profile {path} is not on a uniform grid over [0, 1]")
    return Profile(grid, data[:, 1])


def snapshot_name(index: int, t: float) -> str:
    return f"snapshot_{index:04d}_t{t:.6f}.txt"


def write_diagnostics(traj: TrajectoryReport, path) -> Path:
    l2 = traj.l2_distance_to_target
    lines = [CSV_HEADER]
    for k in range(traj.n_steps):
        l2s = "" if l2 is None else f"{l2[k]:.17g}"
        lines.append(f"{k + 1},{traj.times[k]:.17g},{traj.ut_sup[k]:.17g},{traj.tv_of_slope[k]:.17g},{l2s},{int(traj.n_facets[k])}")
    path = Path(path)
    _write(path, "\n".join(lines) + "\n")
    return path


def write_trajectory(traj: TrajectoryReport, directory) -> list[Path]:
    """Diagnostics CSV plus one file per snapshot, named in time order."""
    d = Path(directory)
    out = [write_diagnostics(traj, d / "diagnostics.csv")]
    for i, (t, u) in enumerate(zip(traj.snapshot_times, traj.snapshots)):
        out.append(write_profile(u, d / snapshot_name(i, t)))
    return out


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def write_json(data: dict, path) -> Path:
    path = Path(path)
    _write(path, json.dumps(_clean(data), indent=2, sort_keys=False) + "\n")
    return path


def experiment_payload(report, config: dict | None = None) -> dict:
    traj = report.trajectory
    data = {
        "scenario": report.scenario,
        "passed": report.passed,
        "params": report.params,
        "checks": [c.to_dict() for c in report.checks],
        "summary": report.summary,
    }
    if traj is not None:
        data["snapshots"] = [{"file": snapshot_name(i, t), "time": t, "facets": fs.to_dict()} for i, (t, fs) in enumerate(zip(traj.snapshot_times, traj.facet_history))]
    if config is not None:
        data["config"] = config
    return data


def emit_report(report, directory, config: dict | None = None) -> list[Path]:
    """Write ``report.json``, ``diagnostics.csv``, snapshots and named profiles."""
    d = Path(directory)
    files = [write_json(experiment_payload(report, config), d / "report.json")]
    if report.trajectory is not None:
        files += write_trajectory(report.trajectory, d)
    for name, prof in sorted(report.profiles.items()):
        files.append(write_profile(prof, d / f"profile_{name}.txt"))
    return files
