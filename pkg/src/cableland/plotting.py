"""PNG figures written next to the CSV outputs.

Figures are rendered with the Agg backend and without a Software/date
stamp so the files are byte-identical across runs.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

PNG_META = {"Software": None}


def _save(fig, path):
    path = Path(path)
    fig.savefig(path, dpi=110, metadata=PNG_META)
    plt.close(fig)
    return path


def _extent(smap):
    g = smap.grid
    return (smap.ys[0] - g.y_step / 2, smap.ys[-1] + g.y_step / 2,
            smap.zs[0] - g.z_step / 2, smap.zs[-1] + g.z_step / 2)


def _map_axes(ax, smap, cells=None, cmap="viridis", vmin=0.0, vmax=1.0, title=None):
    cells = smap.cells if cells is None else cells
    im = ax.imshow(cells, origin="lower", extent=_extent(smap), cmap=cmap, vmin=vmin, vmax=vmax,
                   aspect="auto", interpolation="nearest")
    ax.axvline(0.0, color="w", lw=0.6, ls=":")  # cable below
    ax.set_xlabel("lateral offset y [m]")
    ax.set_ylabel("height above cable [m]")
    if title:
        ax.set_title(title)
    return im


def plot_map(smap, path, title=None, zone=None):
    fig, ax = plt.subplots(figsize=(7, 3.6))
    im = _map_axes(ax, smap, title=title)
    if zone is not None and zone.bbox is not None:
        y0, y1, z0, z1 = zone.bbox
        ax.add_patch(Rectangle((y0, z0), y1 - y0, z1 - z0, fill=False, ec="r", lw=1.5))
    fig.colorbar(im, ax=ax, label="success probability")
    fig.tight_layout()
    return _save(fig, path)


def plot_compare(comparison, path, wind_kmh=None):
    fig, axes = plt.subplots(1, 3, figsize=(15, 3.6))
    suffix = f" ({wind_kmh:g} km/h)" if wind_kmh is not None else ""
    im = _map_axes(axes[0], comparison.dls, title="DLS" + suffix)
    _map_axes(axes[1], comparison.tsls, title="TSLS" + suffix)
    fig.colorbar(im, ax=axes[:2].tolist(), label="success probability")
    imd = _map_axes(axes[2], comparison.tsls, cells=comparison.delta, cmap="RdBu", vmin=-1, vmax=1,
                    title="TSLS - DLS")
    fig.colorbar(imd, ax=axes[2])
    return _save(fig, path)


def plot_sweep(rows, path):
    rows = sorted(rows, key=lambda r: (r.kp, r.kd))
    labels = [f"({r.kp:g},{r.kd:g})" for r in rows]
    x = np.arange(len(rows))
    fig, ax = plt.subplots(figsize=(max(5, 0.5 * len(rows) + 2), 3.6))
    colors = ["tab:blue" if r.eligible else "tab:gray" for r in rows]
    ax.bar(x, [r.zone_area for r in rows], color=colors)
    ax.set_ylabel("100% zone area [m$^2$]")
    ax.set_xticks(x, labels, rotation=45 if len(rows) > 6 else 0, ha="right" if len(rows) > 6 else "center")
    ax2 = ax.twinx()
    t = [min(r.max_alignment_time, 60.0) for r in rows]
    ax2.plot(x, t, "o", color="tab:red")
    ax2.axhline(5.0, color="tab:red", ls="--", lw=0.8)
    ax2.set_ylabel("max alignment time [s]", color="tab:red")
    ax.set_title("lateral PD gains (gray: alignment too slow)")
    fig.tight_layout()
    return _save(fig, path)


def plot_wind(profile, path):
    fig, ax = plt.subplots(figsize=(7, 3))
    ax.plot(profile.times, profile.speeds * 3.6, lw=0.7)
    ax.axhline(profile.spec.mean_speed * 3.6, color="k", lw=0.6, ls="--")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("wind [km/h]")
    fig.tight_layout()
    return _save(fig, path)


def plot_trial(result, path):
    tr = result.trajectory
    fig, axes = plt.subplots(3, 1, figsize=(7, 6), sharex=True)
    axes[0].plot(tr["t"], tr["y"], label="y")
    axes[0].plot(tr["t"], -tr["z"], label="height")
    axes[0].set_ylabel("[m]")
    axes[0].legend(loc="upper right")
    axes[1].plot(tr["t"], np.degrees(tr["roll"]), label="roll")
    axes[1].plot(tr["t"], np.degrees(tr["yaw"]), label="yaw")
    axes[1].set_ylabel("[deg]")
    axes[1].legend(loc="upper right")
    axes[2].step(tr["t"], tr["phase"], where="post")
    axes[2].set_ylabel("phase")
    axes[2].set_xlabel("time [s]")
    axes[0].set_title(f"outcome: {result.outcome.value}")
    fig.tight_layout()
    return _save(fig, path)
