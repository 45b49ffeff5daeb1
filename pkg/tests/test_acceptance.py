"""Acceptance criteria, one test each; every test prints a PASS/FAIL verdict line."""
import math
import os
import time

import numpy as np
import pytest

from cableland.cli import main
from cableland.control import ControllerGains, StrategyConfig
from cableland.dynamics import (CMD_MAX, CMD_MIN, DroneParams, DroneState, LegsZone, RotorPairParams, hover_command,
                                rotor_pair_forces, simulate_open_loop, structural_drag, trajectory_euler)
from cableland.envelope import (KMH, Cable, Grid, SuccessCriteria, TrialSpec, compare_strategies, evaluate_success,
                                extract_zone, gain_sweep, hold_position, monte_carlo_map, run_trial)
from cableland.wind import WindSpec, generate_profile, spectrum_amplitude

from oracles import banded_psd_slope, random_touchdown, success_oracle

# reduced grid for the Monte Carlo criteria: 16 x 6 cells, 5 trials per cell
CI_GRID = Grid(-1.5, 1.5, 0.2, 1.5, 2.5, 0.2)
CI_TRIALS = 5
SEED = 42
REF_GAINS = ControllerGains(kp_y=0.5, kd_y=0.1)
CELL = CI_GRID.y_step * CI_GRID.z_step


@pytest.fixture
def verdict(capsys):
    def report(n, ok, detail, elapsed=None):
        tail = "" if elapsed is None else f" [{elapsed:.1f}s]"
        with capsys.disabled():
            print(f"\nCRITERION {n:>2} {'PASS' if ok else 'FAIL'}: {detail}{tail}")
        return ok
    return report


@pytest.fixture(scope="module")
def tsls_maps():
    """TSLS maps at 5/10/15/20 km/h on the CI grid, shared by criteria 8-10."""
    return {kmh: monte_carlo_map(CI_GRID, CI_TRIALS, kmh * KMH, StrategyConfig(), REF_GAINS, master_seed=SEED)
            for kmh in (5, 10, 15, 20)}


def test_c01_spectral_law(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    f1, f2 = rng.uniform(1e-3, 1e3, 1000), rng.uniform(1e-3, 1e3, 1000)
    v0 = rng.uniform(1e-2, 1e2, 1000)
    rel = np.abs(spectrum_amplitude(f2, v0) / spectrum_amplitude(f1, v0) / (f2 / f1) ** (-5 / 3) - 1)
    dt = time.perf_counter() - t0
    ok = verdict(1, rel.max() <= 1e-12 and dt < 1, f"max relative error {rel.max():.2e} (<= 1e-12)", dt)
    assert ok


def test_c02_wind_statistics(verdict):
    t0 = time.perf_counter()
    mean, std = 10 * KMH, 3.6 * KMH
    sp = np.array([generate_profile(WindSpec(mean_speed=mean, std_dev=std, duration=60.0, seed=s)).speeds
                   for s in range(100)])
    m_err = abs(sp.mean() / mean - 1)
    s_err = abs(sp.std(axis=1).mean() / std - 1)
    spec = WindSpec(mean_speed=mean, std_dev=std, duration=600.0, seed=7)
    p = generate_profile(spec)
    slope = banded_psd_slope(p.speeds, spec.sample_dt, spec.freq_min * 2, spec.freq_max / 2)
    dt = time.perf_counter() - t0
    ok = m_err < 0.05 and s_err < 0.15 and -2.0 <= slope <= -1.33 and dt < 10
    assert verdict(2, ok, f"mean err {m_err:.2%}, std err {s_err:.2%}, periodogram slope {slope:.3f}", dt)


def test_c03_drag_constant(verdict):
    f = -structural_drag((6.0, 0.0, 0.0), DroneParams.default()).force[0]
    rel = abs(f / 11.2896 - 1)
    assert verdict(3, rel <= 1e-9, f"drag {f:.10f} N vs 11.2896 N (rel {rel:.1e})")


def test_c04_hover_persistence(verdict):
    t0 = time.perf_counter()
    h = hold_position(10.0)
    drift = np.max(np.linalg.norm(h[:, :3] - h[0, :3], axis=1))
    att = np.degrees(np.max(np.abs(trajectory_euler(h))))
    dt = time.perf_counter() - t0
    ok = drift < 0.05 and att < 0.5 and dt < 5
    assert verdict(4, ok, f"drift {drift:.2e} m (<0.05), attitude {att:.2e} deg (<0.5)", dt)


def test_c05_propulsion_signs(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    pair = RotorPairParams()
    hub_only = RotorPairParams(position=(0.0, 0.0, 0.0))
    bad = {"lateral": 0, "climb": 0, "parity": 0}
    for _ in range(1000):
        cu, cl = rng.uniform(CMD_MIN + 20, CMD_MAX, 2)
        s1, s2 = np.sort(rng.uniform(0, 10, 2))
        ang = rng.uniform(0, 2 * np.pi)
        d = np.array([np.cos(ang), np.sin(ang)])
        w = rng.uniform(-2, 2)
        if -rotor_pair_forces(pair, cu, cl, (*(s2 * d), w)).force[2] < -rotor_pair_forces(pair, cu, cl, (*(s1 * d), w)).force[2] - 1e-9:
            bad["lateral"] += 1
        c1, c2 = np.sort(rng.uniform(0, 2, 2))
        t1 = -rotor_pair_forces(pair, cu, cl, (0, 0, -c1)).force[2]
        t2 = -rotor_pair_forces(pair, cu, cl, (0, 0, -(c2 + 1e-3))).force[2]
        if not (t2 < t1 or t1 == 0.0):
            bad["climb"] += 1
        a = rotor_pair_forces(hub_only, cu, cl, (*(s2 * d), 0.0)).torque
        b = rotor_pair_forces(hub_only, cu, cl, (*(-s2 * d), 0.0)).torque
        if not np.allclose(a[:2], -b[:2], atol=1e-12):
            bad["parity"] += 1
    dt = time.perf_counter() - t0
    ok = not any(bad.values()) and dt < 5
    assert verdict(5, ok, f"violations over 1000 points: {bad}", dt)


def test_c06_rk4_order(verdict):
    p = DroneParams.default()
    s0 = DroneState.from_euler((0, 0, -2), (0.3, -0.2, 0.1), 0.1, -0.05, 0.2, (0.2, 0.1, -0.1))
    cmds = np.full(8, hover_command(p)) + np.array([30, 10, -20, 5, 15, -25, 0, 20])
    xs = [simulate_open_loop(s0, cmds, (0, 3.0, 0), 1.0 / n, n, p).to_array() for n in (25, 50, 100)]
    r = np.linalg.norm(xs[0] - xs[1]) / np.linalg.norm(xs[1] - xs[2])
    assert verdict(6, 8 <= r <= 24, f"Richardson ratio {r:.2f} in [8, 24]")


def test_c07_success_oracle(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(77)
    legs, crit = LegsZone(), SuccessCriteria()
    mismatch = 0
    for i in range(10_000):
        cable = Cable() if i % 2 else Cable(rng.normal(0, 0.05), rng.normal(0, 0.05), rng.normal(0, 0.05))
        s = random_touchdown(rng)
        mismatch += evaluate_success(s, cable, legs, crit) != success_oracle(s, cable, legs, crit)
    dt = time.perf_counter() - t0
    assert verdict(7, mismatch == 0 and dt < 5, f"{mismatch} disagreements over 10000 states", dt)


def test_c08_gain_ordinal(verdict):
    t0 = time.perf_counter()
    pairs = [(0.1, 0.01), (1, 0.5), (0.5, 0.1), (5, 3)]
    rows = gain_sweep(None, None, 10 * KMH, CI_GRID, CI_TRIALS, master_seed=SEED, pairs=pairs)
    eligible = [r for r in rows if r.eligible]
    ref = next(r for r in rows if (r.kp, r.kd) == (0.5, 0.1))
    best = max((r.zone_area for r in eligible), default=-1)
    one_m = max(run_trial(TrialSpec(y, 2.0, 10 * KMH, wind_seed=k), record=True).alignment_time or math.inf
                for k, y in enumerate((-1.0, 1.0)))
    dt = time.perf_counter() - t0
    table = "; ".join(f"({r.kp:g},{r.kd:g}) area {r.zone_area:.2f} align {r.max_alignment_time:.2f}" for r in rows)
    ok = ref.eligible and ref.zone_area >= best - 1e-9 and rows[0] is ref and one_m < 5.0
    assert verdict(8, ok, f"{table}; 1 m offset alignment {one_m:.2f} s", dt)


def test_c09_wind_monotonicity(verdict, tsls_maps):
    areas = [extract_zone(tsls_maps[k]).area for k in (5, 10, 15, 20)]
    steps_ok = all(b <= a + CELL + 1e-9 for a, b in zip(areas, areas[1:]))
    assert verdict(9, steps_ok, "100% zone area m2 at 5/10/15/20 km/h: " + ", ".join(f"{a:.2f}" for a in areas)
                   + f" (slack {CELL:.2f} per step)")


def test_c10_strategy_dominance(verdict, tsls_maps):
    t0 = time.perf_counter()
    comp = compare_strategies(10 * KMH, CI_GRID, CI_TRIALS, REF_GAINS, master_seed=SEED)
    assert np.array_equal(comp.tsls.cells, tsls_maps[10].cells)  # shared seeds reproduce the TSLS map
    d = comp.delta
    dominated = bool(np.all(d >= -1.0 / CI_TRIALS - 1e-12))
    above = np.abs(CI_GRID.ys) <= 0.1 + 1e-9
    above_ok = bool(np.all(comp.tsls.cells[:, above] == 1.0))
    frac = float(np.mean(d > 0))
    dt = time.perf_counter() - t0
    ok = dominated and above_ok and frac >= 0.10
    assert verdict(10, ok, f"min delta {d.min():+.2f}, above-cable cells all 1.0: {above_ok}, "
                           f"TSLS strictly better on {frac:.1%} of cells", dt)


def _map_files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_c11_schedule_independence(verdict, tmp_path, capsys):
    cfg = tmp_path / "ci.toml"
    g = CI_GRID
    cfg.write_text(f"n_trials = {CI_TRIALS}\n[grid]\ny_min = {g.y_min}\ny_max = {g.y_max}\ny_step = {g.y_step}\n"
                   f"z_min = {g.z_min}\nz_max = {g.z_max}\nz_step = {g.z_step}\n")
    outs, times = [], []
    for w in sorted({1, 2, os.cpu_count() or 1}):
        t0 = time.perf_counter()
        rc = main(["map", "--config", str(cfg), "--wind-kmh", "10", "--seed", "42", "--workers", str(w),
                   "--out", str(tmp_path / f"w{w}"), "--quiet"])
        times.append(time.perf_counter() - t0)
        assert rc == 0
        outs.append(_map_files(tmp_path / f"w{w}"))
    same = all(o == outs[0] for o in outs)
    assert verdict(11, same, f"{len(outs)} worker counts, {len(outs[0])} files each, byte-identical: {same}; "
                             f"times " + ", ".join(f"{t:.0f}s" for t in times))


def test_c12_throughput(verdict, tmp_path, capsys):
    t0 = time.perf_counter()
    rc = main(["map", "--wind-kmh", "10", "--seed", "42", "--workers", "1", "--out", str(tmp_path), "--quiet"])
    dt = time.perf_counter() - t0
    shape = (tmp_path / "map_tsls_10kmh.pgm").read_bytes().split(b"\n")[1]
    ok = rc == 0 and dt < 600 and shape == b"31 11"
    assert verdict(12, ok, f"31x11 grid x 10 trials on one worker in {dt:.0f} s (< 600 s)", dt)
