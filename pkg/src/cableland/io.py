"""Bit-stable file formats: success maps (CSV + JSON sidecar), graymaps, tables."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .envelope import Grid, SuccessMap, Trajectory

CORNER = "z\\y"
TRAJECTORY_HEADER = ("t", "x", "y", "z", "vx", "vy", "vz", "roll", "pitch", "yaw", "p", "q", "r")
SWEEP_HEADER = ("kp", "kd", "zone_area_m2", "max_align_time_s", "eligible")


def _write(path, lines):
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", newline="\n")
    return path


def _grid_csv_lines(ys, zs, cells, fmt):
    lines = [",".join([CORNER] + [f"{y:.3f}" for y in ys])]
    # highest altitude first, like the heatmap
    for i in range(len(zs) - 1, -1, -1):
        vals = [fmt(v) for v in cells[i]]
        lines.append(",".join([f"{zs[i]:.3f}"] + vals))
    return lines


def _prob(v):
    s = f"{v:.3f}"
    return "0.000" if s == "-0.000" else s


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_map_csv(smap: SuccessMap, path, meta: dict | None = None):
    """Map CSV (rows = descending height) and a JSON sidecar with the grid and trial count."""
    path = _write(path, _grid_csv_lines(smap.ys, smap.zs, smap.cells, _prob))
    info = {"grid": asdict(smap.grid), "n_trials": smap.n_trials,
            "wind_mean_mps": smap.wind_mean, "wind_mean_kmh": round(smap.wind_mean * 3.6, 9)}
    if meta:
        info.update(meta)
    sidecar_path(path).write_text(json.dumps(info, indent=2, sort_keys=True) + "\n", newline="\n")
    return path


def write_delta_csv(ys, zs, delta, path):
    return _write(path, _grid_csv_lines(ys, zs, delta, _prob))


def _read_grid_csv(path):
    rows = [ln.split(",") for ln in Path(path).read_text().splitlines() if ln.strip()]
    if len(rows) < 2 or rows[0][0] != CORNER:
        raise ValueError(f"{path}: not a success-map CSV")
    ys = np.array([float(v) for v in rows[0][1:]])
    zs = np.array([float(r[0]) for r in rows[1:]])[::-1]
    cells = np.array([[float(v) for v in r[1:]] for r in rows[1:]])[::-1]
    if cells.shape != (len(zs), len(ys)):
        raise ValueError(f"{path}: ragged rows")
    return ys, zs, cells


def _step(vals, fallback):
    return round(float(vals[1] - vals[0]), 9) if len(vals) > 1 else fallback


def _infer_trials(cells):
    """Smallest n with every value on the 1/n lattice (at 3-decimal precision), 0 if none fits."""
    for n in range(1, 1001):
        if np.all(np.abs(cells * n - np.round(cells * n)) <= n * 0.0005 + 1e-9):
            return n
    return 0


def read_map_csv(path) -> SuccessMap:
    ys, zs, cells = _read_grid_csv(path)
    side = sidecar_path(path)
    if side.exists():
        info = json.loads(side.read_text())
        grid = Grid(**info["grid"])
        if not (np.allclose(grid.ys, ys, atol=5e-4) and np.allclose(grid.zs, zs, atol=5e-4)):
            raise ValueError(f"{path}: sidecar grid does not match the CSV")
        return SuccessMap(grid, int(info["n_trials"]), float(info["wind_mean_mps"]), cells)
    grid = Grid(float(ys[0]), float(ys[-1]), _step(ys, 0.1), float(zs[0]), float(zs[-1]), _step(zs, 0.1))
    return SuccessMap(grid, _infer_trials(cells), float("nan"), cells)


# --------------------------------------------------------------------------
# graymap

@dataclass
class HeatmapImage:
    width: int
    height: int
    pixels: np.ndarray  # uint8, shape (height, width), top row = highest altitude

    def to_pgm(self) -> bytes:
        return f"P5\n{self.width} {self.height}\n255\n".encode("ascii") + self.pixels.tobytes()


def render_heatmap(smap: SuccessMap) -> HeatmapImage:
    p = np.clip(smap.cells, 0.0, 1.0)
    px = np.floor(p * 255.0 + 0.5).astype(np.uint8)[::-1]
    h, w = px.shape
    return HeatmapImage(w, h, np.ascontiguousarray(px))


def write_pgm(smap: SuccessMap, path):
    path = Path(path)
    path.write_bytes(render_heatmap(smap).to_pgm())
    return path


def read_pgm(path) -> HeatmapImage:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5" or parts[2] != b"255":
        raise ValueError(f"{path}: not an 8-bit binary graymap")
    w, h = (int(v) for v in parts[1].split())
    px = np.frombuffer(parts[3], dtype=np.uint8)
    if px.size != w * h:
        raise ValueError(f"{path}: truncated pixel data")
    return HeatmapImage(w, h, px.reshape(h, w).copy())


# --------------------------------------------------------------------------
# tables

def write_sweep_csv(rows, path):
    lines = [",".join(SWEEP_HEADER)]
    for r in rows:
        t = "inf" if math.isinf(r.max_alignment_time) else f"{r.max_alignment_time:.3f}"
        lines.append(f"{r.kp:g},{r.kd:g},{r.zone_area:.4f},{t},{'true' if r.eligible else 'false'}")
    return _write(path, lines)


def read_sweep_csv(path):
    lines = Path(path).read_text().splitlines()
    if tuple(lines[0].split(",")) != SWEEP_HEADER:
        raise ValueError(f"{path}: not a sweep table")
    out = []
    for ln in lines[1:]:
        kp, kd, area, t, ok = ln.split(",")
        out.append((float(kp), float(kd), float(area), float(t), ok == "true"))
    return out


def write_trajectory_csv(traj: Trajectory, path):
    cols = np.column_stack([traj[c] for c in TRAJECTORY_HEADER])
    lines = [",".join(TRAJECTORY_HEADER)]
    lines += [",".join(repr(float(v)) for v in row) for row in cols]
    return _write(path, lines)


def write_phase_log_csv(phase_log, path):
    lines = ["t,phase_from,phase_to,reason"]
    for t, a, b, why in phase_log:
        lines.append(f"{t:.3f},{a.name},{b.name},{why.name}")
    return _write(path, lines)
