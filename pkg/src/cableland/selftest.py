"""Quick invariant checks runnable from an installed package (``cableland selftest``)."""
from __future__ import annotations

import time

import numpy as np

from .config import RunConfig, parse_config, serialize_config
from .control import ControllerGains, hlpc_update
from .dynamics import (CMD_MAX, CMD_MIN, DroneParams, DroneState, hover_command, hover_state,
                       rotor_pair_forces, simulate_open_loop, structural_drag, trajectory_euler)
from .envelope import (Grid, SuccessCriteria, SuccessMap, TrialSpec, evaluate_success, hold_position,
                       merge_maps, run_trial)
from .io import render_heatmap
from .wind import WindSpec, generate_profile, spectrum_amplitude


def check_spectrum_law(rng):
    f1, f2 = rng.uniform(0.01, 10, 200), rng.uniform(0.01, 10, 200)
    v0 = rng.uniform(0.1, 10, 200)
    ratio = spectrum_amplitude(f2, v0) / spectrum_amplitude(f1, v0)
    err = np.max(np.abs(ratio / (f2 / f1) ** (-5 / 3) - 1))
    return err <= 1e-12, f"max rel err {err:.2e}"


def check_wind_stats(rng):
    sp = [generate_profile(WindSpec(seed=s)).speeds for s in range(10)]
    m, sd = np.mean(sp), np.mean([np.std(s) for s in sp])
    ok = abs(m / (10 / 3.6) - 1) < 0.05 and abs(sd / 1.0 - 1) < 0.2
    return ok, f"mean {m * 3.6:.2f} km/h, std {sd * 3.6:.2f} km/h"


def check_drag(rng):
    f = structural_drag((6.0, 0.0, 0.0), DroneParams.default()).force
    return abs(-f[0] / 11.2896 - 1) < 1e-9, f"|F| = {-f[0]:.6f} N"


def check_hover(rng):
    h = hold_position(10.0)
    drift = np.max(np.linalg.norm(h[:, :3], axis=1))
    att = np.degrees(np.max(np.abs(trajectory_euler(h)[:, :2])))
    return drift < 0.05 and att < 0.5, f"drift {drift:.2e} m, attitude {att:.2e} deg"


def check_thrust_signs(rng):
    pair = DroneParams.default().rotor_pairs[0]
    ok = True
    for _ in range(100):
        c = rng.uniform(CMD_MIN + 50, CMD_MAX)
        a, b = sorted(rng.uniform(0, 8, 2))
        ta = rotor_pair_forces(pair, c, c, (a, 0, 0)).force[2]
        tb = rotor_pair_forces(pair, c, c, (b, 0, 0)).force[2]
        ok &= tb <= ta + 1e-12  # thrust is -z
    return bool(ok), "thrust non-decreasing in lateral airspeed"


def check_rk4_order(rng):
    p = DroneParams.default()
    s0 = DroneState.from_euler((0, 0, -2), (0.3, -0.2, 0.1), 0.1, -0.05, 0.2, (0.2, 0.1, -0.1))
    cmds = np.full(8, hover_command(p)) + np.array([30, 10, -20, 5, 15, -25, 0, 20])
    wind = (0.0, 3.0, 0.0)
    xs = [simulate_open_loop(s0, cmds, wind, 1.0 / n, n, p).to_array() for n in (25, 50, 100)]
    r = np.linalg.norm(xs[0] - xs[1]) / np.linalg.norm(xs[1] - xs[2])
    return 8 <= r <= 24, f"Richardson ratio {r:.2f}"


def check_success_monotone(rng):
    crit = SuccessCriteria()
    big = SuccessCriteria(0.2, 0.2, 0.5, (1.0, -0.2), 0.3, 0.3)
    bad = 0
    for _ in range(300):
        st = DroneState.from_euler((0, rng.normal(0, 0.1), -0.225 + rng.normal(0, 0.05)),
                                   rng.normal(0, 0.1, 3) + (0, 0, 0.1), *rng.normal(0, 0.05, 3),
                                   angular_rate=rng.normal(0, 0.05, 3))
        if evaluate_success(st, criteria=crit)[0] and not evaluate_success(st, criteria=big)[0]:
            bad += 1
    return bad == 0, f"{bad} flips"


def check_hlpc(rng):
    v = hlpc_update(1.0, 0.0, 0.0, (0.0, 0.0), ControllerGains())
    return abs(v.vy_cmd - 0.5) < 1e-12, f"vy_cmd {v.vy_cmd}"


def check_merge_and_pgm(rng):
    g = Grid(-0.2, 0.2, 0.1, 1.5, 1.7, 0.1)
    a, b = (SuccessMap(g, 10, 1.0, np.round(rng.uniform(0, 1, g.shape), 1)) for _ in range(2))
    ok = np.array_equal(merge_maps([a, b]).cells, merge_maps([b, a]).cells)
    ok &= np.array_equal(merge_maps([a, a]).cells, a.cells)
    half = render_heatmap(SuccessMap(g, 2, 1.0, np.full(g.shape, 0.5))).pixels
    ok &= bool(np.all(half == 128))
    return bool(ok), "merge commutative/idempotent, 0.5 -> 128"


def check_config(rng):
    cfg = RunConfig()
    return parse_config(serialize_config(cfg)) == cfg and parse_config("") == cfg, "round trip"


def check_determinism(rng):
    spec = TrialSpec(0.3, 1.8, wind_seed=7)
    a, b = run_trial(spec, record=True), run_trial(spec, record=True)
    ok = a.outcome == b.outcome and np.array_equal(a.trajectory.data, b.trajectory.data)
    return ok, f"outcome {a.outcome.value}"


def check_hover_trim(rng):
    p = DroneParams.default()
    s = simulate_open_loop(hover_state(), np.full(8, hover_command(p)), (0, 0, 0), 0.005, 200, p)
    return float(np.max(np.abs(s.velocity))) < 1e-9, f"hover command {hover_command(p):.1f} us"


CHECKS = [check_spectrum_law, check_wind_stats, check_drag, check_hover_trim, check_hover,
          check_thrust_signs, check_rk4_order, check_success_monotone, check_hlpc,
          check_merge_and_pgm, check_config, check_determinism]


def run_all(verbose=True):
    rng = np.random.default_rng(20240611)
    all_ok = True
    for chk in CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = chk(rng)
        except Exception as exc:  # a crash is a failure, keep going
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok &= bool(ok)
        if verbose:
            name = chk.__name__.removeprefix("check_")
            print(f"{'PASS' if ok else 'FAIL'},{name},{detail.replace(',', ';')},{time.perf_counter() - t0:.2f}s")
    if verbose:
        print("selftest: " + ("all checks passed" if all_ok else "FAILURES"))
    return all_ok
