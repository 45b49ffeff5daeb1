"""``cableland`` command line.

Exit codes: 0 success, 1 usage/validation error, 2 runtime fault.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import plotting
from .config import ConfigError, RunConfig, load_config, parse_config
from .control import Strategy
from .envelope import (TrialSpec, compare_strategies, extract_zone, gain_sweep, matlab_range,
                       merge_maps, monte_carlo_map, resolve_workers)
from .io import (read_map_csv, write_delta_csv, write_map_csv, write_pgm, write_phase_log_csv,
                 write_sweep_csv, write_trajectory_csv)
from .wind import KMH, WindSpec, generate_profile, write_profile_csv

DEFAULT_PAIRS = ((0.1, 0.01), (1.0, 0.5), (0.5, 0.1), (5.0, 3.0))


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _kmh_tag(v):
    return f"{v:g}".replace(".", "p")


def _progress(enabled, label):
    if not enabled:
        return None
    state = {"last": -1}

    def report(done, total):
        pct = int(100 * done / total)
        if pct // 5 != state["last"] // 5 or done == total:
            state["last"] = pct
            print(f"\r{label}: {done}/{total} ({pct}%)", end="\n" if done == total else "",
                  file=sys.stderr, flush=True)
    return report


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else parse_config("")
    over = {}
    if getattr(args, "seed", None) is not None:
        over["master_seed"] = args.seed
    if getattr(args, "n_trials", None) is not None:
        over["n_trials"] = args.n_trials
    if getattr(args, "workers", None) is not None:
        over["workers"] = args.workers
    if getattr(args, "out", None) is not None:
        over["output_dir"] = args.out
    if getattr(args, "kp", None) is not None or getattr(args, "kd", None) is not None:
        over["gains"] = replace(cfg.gains, **{k: v for k, v in (("kp_y", args.kp), ("kd_y", args.kd))
                                              if v is not None})
    if getattr(args, "strategy", None) is not None:
        over["strategy"] = replace(cfg.strategy, strategy=Strategy(args.strategy))
    if getattr(args, "grid_step", None) is not None:
        over["grid"] = replace(cfg.grid, y_step=args.grid_step, z_step=args.grid_step)
    if getattr(args, "timeout", None) is not None:
        over["sim"] = replace(cfg.sim, timeout=args.timeout)
    return replace(cfg, **over)


def _outdir(cfg):
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _wind_levels(args, cfg):
    return list(args.wind_kmh) if args.wind_kmh else list(cfg.wind_means_kmh)


def _map_meta(cfg, strategy=None):
    return {"strategy": (strategy or cfg.strategy.strategy).value, "master_seed": cfg.master_seed,
            "kp_y": cfg.gains.kp_y, "kd_y": cfg.gains.kd_y, "wind_std_kmh": cfg.wind_std_kmh}


def _emit_map(smap, out, stem, title, meta):
    csv = write_map_csv(smap, out / f"{stem}.csv", meta)
    write_pgm(smap, out / f"{stem}.pgm")
    zone = extract_zone(smap, 1.0)
    plotting.plot_map(smap, out / f"{stem}.png", title=title, zone=zone)
    return csv, zone


def _print_zone(label, zone):
    if zone.bbox is None:
        print(f"{label},zone_area_m2=0.0000,bbox=none")
    else:
        y0, y1, z0, z1 = zone.bbox
        print(f"{label},zone_area_m2={zone.area:.4f},bbox_y=[{y0:.2f};{y1:.2f}],bbox_z=[{z0:.2f};{z1:.2f}]")


# --------------------------------------------------------------------------
# subcommands

def cmd_wind(args):
    cfg = _load(args)
    out = _outdir(cfg)
    for kmh in _wind_levels(args, cfg):
        spec = WindSpec(mean_speed=kmh * KMH, std_dev=cfg.wind_std_kmh * KMH, duration=args.duration,
                        seed=cfg.master_seed)
        prof = generate_profile(spec)
        stem = f"wind_{_kmh_tag(kmh)}kmh_seed{cfg.master_seed}"
        path = out / f"{stem}.csv"
        write_profile_csv(prof, path)
        plotting.plot_wind(prof, out / f"{stem}.png")
        sp = prof.speeds
        print(f"{path},mean_kmh={sp.mean() * 3.6:.3f},std_kmh={sp.std() * 3.6:.3f}")
    return 0


def cmd_trial(args):
    cfg = _load(args)
    out = _outdir(cfg)
    kmh = args.wind_kmh[0] if args.wind_kmh else cfg.wind_means_kmh[0]
    spec = TrialSpec(y_offset=args.y, height=args.z, wind_mean=kmh * KMH, wind_seed=cfg.master_seed,
                     strategy=cfg.strategy, gains=cfg.gains, timeout=cfg.sim.timeout,
                     wind_std=cfg.wind_std_kmh * KMH)
    res = cfg.simulator().run(spec, record=True)
    stem = f"trial_{cfg.strategy.strategy.value}_{_kmh_tag(kmh)}kmh_y{args.y:+.2f}_z{args.z:.2f}_seed{cfg.master_seed}"
    write_trajectory_csv(res.trajectory, out / f"{stem}.csv")
    write_phase_log_csv(res.phase_log, out / f"{stem}_phases.csv")
    plotting.plot_trial(res, out / f"{stem}.png")
    at = "none" if res.alignment_time is None else f"{res.alignment_time:.3f}"
    viol = ";".join(str(v) for v in res.violated) or "none"
    print(f"outcome={res.outcome.value},violated={viol},duration_s={res.duration:.3f},alignment_time_s={at}")
    print(out / f"{stem}.csv")
    return 0


def cmd_map(args):
    cfg = _load(args)
    out = _outdir(cfg)
    workers = resolve_workers(cfg.workers)
    for kmh in _wind_levels(args, cfg):
        smap = monte_carlo_map(cfg.grid, cfg.n_trials, kmh * KMH, cfg.strategy, cfg.gains,
                               cfg.simulator(), cfg.master_seed, workers, cfg.sim.timeout,
                               cfg.wind_std_kmh * KMH, _progress(not args.quiet, f"map {kmh:g} km/h"))
        stem = f"map_{cfg.strategy.strategy.value}_{_kmh_tag(kmh)}kmh"
        csv, zone = _emit_map(smap, out, stem, f"{cfg.strategy.strategy.value.upper()} {kmh:g} km/h",
                              _map_meta(cfg))
        _print_zone(csv, zone)
    return 0


def cmd_merge(args):
    maps = [read_map_csv(p) for p in args.maps]
    merged = merge_maps(maps)
    out_csv = Path(args.output)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    stem = out_csv.with_suffix("")
    csv, zone = _emit_map(merged, stem.parent, stem.name, "merged (cell-wise minimum)",
                          {"inputs": [Path(p).name for p in args.maps]})
    _print_zone(csv, zone)
    return 0


def _parse_range(text, flag):
    try:
        a, b, c = (float(v) for v in text.split(":"))
    except ValueError:
        raise UsageError(f"{flag} expects start:step:stop, got {text!r}") from None
    if b <= 0 or c < a:
        raise UsageError(f"{flag} needs step > 0 and stop >= start")
    return matlab_range(a, b, c)


def _parse_pairs(text):
    pairs = []
    for item in text.split(","):
        try:
            kp, kd = (float(v) for v in item.split(":"))
        except ValueError:
            raise UsageError(f"--pairs expects kp:kd[,kp:kd...], got {item!r}") from None
        pairs.append((kp, kd))
    return pairs


def cmd_sweep(args):
    cfg = _load(args)
    out = _outdir(cfg)
    kmh = args.wind_kmh[0] if args.wind_kmh else 10.0
    if args.kp_range or args.kd_range:
        kps = _parse_range(args.kp_range or "0.1:0.5:5", "--kp-range")
        kds = _parse_range(args.kd_range or "0.01:0.1:3", "--kd-range")
        pairs = [(kp, kd) for kp in kps for kd in kds]
    elif args.pairs:
        pairs = _parse_pairs(args.pairs)
    else:
        pairs = list(DEFAULT_PAIRS)
    rows = gain_sweep(None, None, kmh * KMH, cfg.grid, cfg.n_trials, cfg.simulator(), cfg.master_seed,
                      cfg.strategy, cfg.gains, resolve_workers(cfg.workers), pairs=pairs,
                      timeout=cfg.sim.timeout, progress=_progress(not args.quiet, "sweep"))
    stem = f"sweep_{_kmh_tag(kmh)}kmh"
    path = write_sweep_csv(rows, out / f"{stem}.csv")
    plotting.plot_sweep(rows, out / f"{stem}.png")
    if args.save_maps:
        for r in rows:
            _emit_map(r.success_map, out, f"{stem}_kp{_kmh_tag(r.kp)}_kd{_kmh_tag(r.kd)}",
                      f"kp={r.kp:g} kd={r.kd:g}", {**_map_meta(cfg), "kp_y": r.kp, "kd_y": r.kd})
    print(path)
    for r in rows:
        print(f"{r.kp:g},{r.kd:g},{r.zone_area:.4f},{r.max_alignment_time:.3f},{str(r.eligible).lower()}")
    return 0


def cmd_compare(args):
    cfg = _load(args)
    out = _outdir(cfg)
    for kmh in (args.wind_kmh or [10.0]):
        comp = compare_strategies(kmh * KMH, cfg.grid, cfg.n_trials, cfg.gains, cfg.simulator(),
                                  cfg.master_seed, cfg.strategy, resolve_workers(cfg.workers),
                                  cfg.sim.timeout, _progress(not args.quiet, f"compare {kmh:g} km/h"))
        tag = _kmh_tag(kmh)
        for s, m in ((Strategy.DLS, comp.dls), (Strategy.TSLS, comp.tsls)):
            csv, zone = _emit_map(m, out, f"compare_{s.value}_{tag}kmh", f"{s.value.upper()} {kmh:g} km/h",
                                  _map_meta(cfg, s))
            _print_zone(csv, zone)
        dpath = write_delta_csv(comp.tsls.ys, comp.tsls.zs, comp.delta, out / f"compare_delta_{tag}kmh.csv")
        plotting.plot_compare(comp, out / f"compare_{tag}kmh.png", kmh)
        d = comp.delta
        print(f"{dpath},mean_delta={d.mean():.4f},tsls_better_frac={(d > 0).mean():.4f},"
              f"dls_better_frac={(d < 0).mean():.4f}")
    return 0


def cmd_selftest(args):
    from .selftest import run_all
    return 0 if run_all(verbose=not args.quiet) else 2


# --------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="cableland", description="Landing-envelope simulator for cable-perching multirotors.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, seed=True, trials=False, workers=False, gains=False, strategy=False, grid=False):
        sp.add_argument("--config", help="TOML run configuration")
        sp.add_argument("--out", help="output directory (default from config)")
        sp.add_argument("--quiet", action="store_true", help="no progress on stderr")
        sp.add_argument("--wind-kmh", type=float, action="append", help="mean wind in km/h (repeatable)")
        if seed:
            sp.add_argument("--seed", type=int, help="master seed")
        if trials:
            sp.add_argument("--n-trials", type=int)
        if workers:
            sp.add_argument("--workers", type=int, help="0 = auto")
        if gains:
            sp.add_argument("--kp", type=float, help="lateral proportional gain")
            sp.add_argument("--kd", type=float, help="lateral derivative gain")
        if strategy:
            sp.add_argument("--strategy", choices=[s.value for s in Strategy])
        if grid:
            sp.add_argument("--grid-step", type=float, help="cell size for both axes (m)")
        sp.add_argument("--timeout", type=float, help="trial timeout (s)")

    sp = sub.add_parser("wind", help="write a wind profile CSV")
    common(sp)
    sp.add_argument("--duration", type=float, default=60.0)
    sp.set_defaults(func=cmd_wind)

    sp = sub.add_parser("trial", help="run one landing trial")
    common(sp, gains=True, strategy=True)
    sp.add_argument("--y", type=float, required=True, help="initial lateral offset (m)")
    sp.add_argument("--z", type=float, required=True, help="initial height above the cable (m)")
    sp.set_defaults(func=cmd_trial)

    sp = sub.add_parser("map", help="Monte Carlo success map per wind level")
    common(sp, trials=True, workers=True, gains=True, strategy=True, grid=True)
    sp.set_defaults(func=cmd_map)

    sp = sub.add_parser("merge", help="cell-wise minimum of success maps")
    sp.add_argument("maps", nargs="+")
    sp.add_argument("-o", "--output", default="merged.csv")
    sp.set_defaults(func=cmd_merge)

    sp = sub.add_parser("sweep", help="rank lateral PD gain pairs")
    common(sp, trials=True, workers=True, strategy=True, grid=True)
    sp.add_argument("--pairs", help="explicit kp:kd list, comma separated")
    sp.add_argument("--kp-range", help="start:step:stop")
    sp.add_argument("--kd-range", help="start:step:stop")
    sp.add_argument("--save-maps", action="store_true")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("compare", help="DLS vs TSLS maps with shared seeds")
    common(sp, trials=True, workers=True, gains=True, grid=True)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("selftest", help="run the built-in invariant checks")
    sp.add_argument("--quiet", action="store_true")
    sp.set_defaults(func=cmd_selftest)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_usage(sys.stderr)
            print("cableland: error: a subcommand is required", file=sys.stderr)
            return 1
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (ConfigError, ValueError) as exc:
        print(f"cableland: invalid input: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 2
    except Exception as exc:  # runtime fault
        print(f"cableland: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
