"""Trajectory tables and certificate reports.

Trajectories are comma-separated with a header row. Floats are written with
17 significant digits so re-reading reproduces every double exactly. Reports
are JSON with sorted keys and no timestamps, so identical runs give identical
bytes.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .. import __version__
from ..core import SampledCurve, TimeGrid
from ..manifold import Atlas, ManifoldTrajectory

REPORT_SCHEMA = 1


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def emit_trajectory(curve: SampledCurve, path) -> None:
    rows = [["t"] + [f"x_{k}" for k in range(curve.dim)]]
    for t, x in zip(curve.grid.nodes, curve.values):
        rows.append([fmt(t)] + [fmt(v) for v in x])
    _write_rows(path, rows)


def emit_manifold_trajectory(traj: ManifoldTrajectory, atlas: Atlas, path) -> None:
    """One row per node of every segment; boundary times appear in both adjacent segments."""
    d = atlas.dim
    first = traj.segments[0]
    amb = len(atlas.charts[first.chart].from_local(first.curve.values[0]))
    rows = [["t", "chart_id"] + [f"x_{k}" for k in range(d)] + [f"p_{k}" for k in range(amb)]]
    for seg in traj.segments:
        chart = atlas.charts[seg.chart]
        for t, z in zip(seg.curve.grid.nodes, seg.curve.values):
            p = chart.from_local(z)
            rows.append([fmt(t), str(seg.chart)] + [fmt(v) for v in z] + [fmt(v) for v in p])
    _write_rows(path, rows)


def _write_rows(path, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def read_trajectory(path) -> tuple[list[str], np.ndarray]:
    """Header and float table of an emitted trajectory file."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader], dtype=float)
    return header, data


def curve_from_table(table: np.ndarray, grid: TimeGrid) -> SampledCurve:
    """Rebuild a curve on ``grid`` from a ``t, x_0, ...`` table, checking the times."""
    if table.shape[0] != grid.n_steps + 1 or not np.allclose(table[:, 0], grid.nodes, rtol=0, atol=1e-12):
        raise ValueError("trajectory times do not match the scenario grid")
    return SampledCurve(grid, table[:, 1:])


def _clean(obj):
    """Make a report JSON-ready: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def build_report(kind: str, seed: int, body: dict) -> dict:
    return {"schema": REPORT_SCHEMA, "tool": "intcurve", "tool_version": __version__, "kind": kind, "seed": seed, **body}


def emit_certificate(report: dict, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_clean(report), fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")
