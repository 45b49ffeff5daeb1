"""Landing trials, the success function and Monte Carlo success maps."""
from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numba
import numpy as np

from .control import (ControllerGains, LandingPhase, LLFCParams, Reason, Strategy,
                      StrategyConfig, _hlpc, _llfc, _sm_step, _wrap_line, landing_height)
from .dynamics import N_STATE, DroneParams, DroneState, LegsZone, _euler, _euler_rates, _rk4, _rotation
from .wind import KMH, WindSpec, generate_profile

WIND_STD = 3.6 * KMH
CONDITIONS = {
    1: "cable in legs zone",
    2: "roll angle",
    3: "roll rate",
    4: "speed",
    5: "velocity direction",
    6: "yaw error",
    7: "yaw rate",
}


@dataclass(frozen=True)
class SuccessCriteria:
    phi_tol: float = 0.08
    phi_dot_tol: float = 0.08
    v_norm_tol: float = 0.2
    v_dir_window: tuple = (0.5, -0.2)  # (lateral half-width m, plane offset m; negative = below cable)
    dpsi_tol: float = 0.1
    psi_dot_tol: float = 0.1

    def __post_init__(self):
        tols = (self.phi_tol, self.phi_dot_tol, self.v_norm_tol, self.v_dir_window[0],
                self.dpsi_tol, self.psi_dot_tol)
        if min(tols) <= 0:
            raise ValueError("success tolerances must be positive")
        if len(self.v_dir_window) != 2:
            raise ValueError("v_dir_window is (lateral_half_width, vertical_offset)")

    def pack(self):
        return np.array([self.phi_tol, self.phi_dot_tol, self.v_norm_tol, self.v_dir_window[0],
                         self.v_dir_window[1], self.dpsi_tol, self.psi_dot_tol])


@dataclass(frozen=True)
class Cable:
    """Straight horizontal conductor through ``(0, y, z)`` (NED) with the given heading."""

    y: float = 0.0
    z: float = 0.0
    heading: float = 0.0

    def pack(self):
        return np.array([self.y, self.z, self.heading])


# --------------------------------------------------------------------------
# success function

@numba.njit(cache=True)
def _cable_in_body(x, cable):
    """Body (y, z) where the cable pierces the body y-z plane; ok=False if parallel."""
    R = _rotation(x[6:10])
    ch, sh = math.cos(cable[2]), math.sin(cable[2])
    d0 = 0.0 - x[0]
    d1 = cable[0] - x[1]
    d2 = cable[1] - x[2]
    b = np.empty(3)
    u = np.empty(3)
    for i in range(3):
        b[i] = R[0, i] * d0 + R[1, i] * d1 + R[2, i] * d2
        u[i] = R[0, i] * ch + R[1, i] * sh
    if abs(u[0]) < 1e-9:
        return False, 0.0, 0.0
    s = -b[0] / u[0]
    return True, b[1] + s * u[1], b[2] + s * u[2]


@numba.njit(cache=True)
def _evaluate(x, cable, legs, crit):
    """Bit mask of violated conditions (bit k-1 for condition k); 0 means success."""
    mask = 0
    ok, by, bz = _cable_in_body(x, cable)
    hw, height, bottom = legs[0], legs[1], legs[2]
    if not (ok and abs(by) <= hw and bottom - height <= bz <= bottom):
        mask |= 1
    e = _euler(x[6:10])
    rates = _euler_rates(x[6:10], x[10:13])
    if abs(e[0]) > crit[0]:
        mask |= 2
    if abs(rates[0]) > crit[1]:
        mask |= 4
    vx, vy, vz = x[3], x[4], x[5]
    speed = math.sqrt(vx * vx + vy * vy + vz * vz)
    if speed > crit[2]:
        mask |= 8
    if speed > 0.0:
        good = False
        if vz > 0.0:
            R = _rotation(x[6:10])
            px = x[0] + R[0, 2] * bottom
            py = x[1] + R[1, 2] * bottom
            pz = x[2] + R[2, 2] * bottom
            t = (cable[1] - crit[4] - pz) / vz
            if t >= 0.0:
                cx = px + t * vx
                cy = py + t * vy
                lateral = -math.sin(cable[2]) * cx + math.cos(cable[2]) * (cy - cable[0])
                good = abs(lateral) <= crit[3]
        if not good:
            mask |= 16
    if abs(_wrap_line(e[2] - cable[2])) > crit[5]:
        mask |= 32
    if abs(rates[2]) > crit[6]:
        mask |= 64
    return mask


def _mask_to_ids(mask):
    return [k for k in range(1, 8) if mask & (1 << (k - 1))]


def evaluate_success(state: DroneState, cable: Cable = Cable(), legs_zone: LegsZone = LegsZone(),
                     criteria: SuccessCriteria = SuccessCriteria()):
    """Seven-condition landing check; returns ``(success, violated condition ids)``."""
    x = state.to_array()
    if not np.all(np.isfinite(x)):
        raise ValueError("state must be finite")
    legs = np.array([legs_zone.half_width, legs_zone.height, legs_zone.bottom])
    mask = _evaluate(x, cable.pack(), legs, criteria.pack())
    return mask == 0, _mask_to_ids(mask)


# --------------------------------------------------------------------------
# trials

class Outcome(str, enum.Enum):
    SUCCESS = "success"
    FAIL_CRITERIA = "fail_criteria"
    TIMEOUT = "timeout"
    DIVERGED = "diverged"


TRAJ_COLUMNS = ("t", "x", "y", "z", "vx", "vy", "vz", "roll", "pitch", "yaw", "p", "q", "r",
                "phase", "target_y", "target_h", "vy_cmd", "vz_cmd", "wind")


@dataclass(frozen=True)
class SimSettings:
    dt: float = 0.005
    hlpc_rate: float = 20.0
    timeout: float = 60.0
    settle: float = 6.0

    def __post_init__(self):
        if self.settle < 0:
            raise ValueError("settle must be >= 0")
        if not (self.dt > 0 and self.timeout > 0 and self.hlpc_rate > 0):
            raise ValueError("dt, timeout and hlpc_rate must be positive")
        ratio = 1.0 / (self.hlpc_rate * self.dt)
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("HLPC period must be an integer multiple of dt")

    @property
    def hlpc_every(self):
        return int(round(1.0 / (self.hlpc_rate * self.dt)))


@dataclass(frozen=True)
class TrialSpec:
    y_offset: float
    height: float
    wind_mean: float = 10.0 * KMH
    wind_seed: int = 0
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    gains: ControllerGains = field(default_factory=ControllerGains)
    timeout: float = 60.0
    wind_std: float = WIND_STD

    def __post_init__(self):
        if not self.height > 0:
            raise ValueError("initial height above cable must be positive")
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")
        if not 0 <= int(self.wind_seed) < 2**64:
            raise ValueError("wind_seed must be an unsigned 64-bit integer")


@dataclass
class Trajectory:
    data: np.ndarray

    def __getitem__(self, name):
        return self.data[:, TRAJ_COLUMNS.index(name)]

    def __len__(self):
        return len(self.data)


@dataclass
class TrialResult:
    outcome: Outcome
    violated: list = field(default_factory=list)
    touchdown_state: Optional[DroneState] = None
    trajectory: Optional[Trajectory] = None
    phase_log: list = field(default_factory=list)
    alignment_time: Optional[float] = None
    duration: float = 0.0

    @property
    def success(self):
        return self.outcome is Outcome.SUCCESS


@numba.njit(cache=True)
def _simulate(body, rotors, lp, gains, cfg, crit, cable, wind, wind_dt,
              y0, h0, timeout, dt, hlpc_every, settle, traj, log):
    """Closed-loop landing trial.

    Returns ``(code, mask, n_traj, n_log, t_end, touchdown)`` where code is
    0 success, 1 criteria failure, 2 timeout/abort, 3 diverged.
    """
    x = np.zeros(N_STATE)
    x[1] = y0
    x[2] = cable[1] - h0
    x[6] = 1.0
    nxt = np.empty(N_STATE)
    integ = np.zeros(8)
    cmds = np.empty(8)
    vcmd = np.zeros(3)
    hl = np.zeros(3)
    target = np.zeros(2)
    wind_vec = np.zeros(3)
    legs = body[8:11]
    phase = 0
    dwell = 0.0
    n_traj = 0
    n_log = 0
    hlpc_dt = dt * hlpc_every
    n_wind = wind.shape[0]
    # trim against the initial wind: hold x0 for a while, then restore position and velocity
    wind_vec[1] = wind[0]
    n_settle = int(round(settle / dt))
    for i in range(n_settle):
        if i % hlpc_every == 0:
            e = _euler(x[6:10])
            rates = _euler_rates(x[6:10], x[10:13])
            _hlpc(y0 - x[1], cable[1] - x[2] - h0, -_wrap_line(e[2] - cable[2]), -x[4], -rates[2],
                  gains, cfg[11], cfg[12], cfg[13], False, cfg[10], hl)
            vcmd[1] = hl[0]
            vcmd[2] = hl[1]
        _llfc(vcmd, hl[2], x, dt, body, rotors, lp, integ, cmds)
        _rk4(body, rotors, x, cmds, wind_vec, dt, nxt)
        for k in range(N_STATE):
            x[k] = nxt[k]
    x[0] = 0.0
    x[1] = y0
    x[2] = cable[1] - h0
    x[3:6] = 0.0
    vcmd[:] = 0.0
    hl[:] = 0.0
    max_steps = int(math.ceil(timeout / dt - 1e-9))
    code = 2
    mask = 0
    i = 0
    while True:
        t = i * dt
        # wind: linear interpolation on the uniform profile
        s = t / wind_dt
        k = int(s)
        if k >= n_wind - 1:
            wind_vec[1] = wind[n_wind - 1]
        else:
            f = s - k
            wind_vec[1] = wind[k] + f * (wind[k + 1] - wind[k])
        if i % hlpc_every == 0:
            e = _euler(x[6:10])
            rates = _euler_rates(x[6:10], x[10:13])
            y_rel = x[1] - cable[0]
            h = cable[1] - x[2]
            psi = _wrap_line(e[2] - cable[2])
            timed_out = i >= max_steps
            new, dwell, reason = _sm_step(phase, y_rel, h, psi, dwell, hlpc_dt, cfg, -1,
                                          timed_out, target)
            if new != phase:
                if n_log < log.shape[0]:
                    log[n_log, 0] = t
                    log[n_log, 1] = phase
                    log[n_log, 2] = new
                    log[n_log, 3] = reason
                    n_log += 1
                phase = new
            if phase == 5:
                code = 2
                break
            landing = phase == 3
            _hlpc(target[0] - y_rel, h - target[1], -psi, -x[4], -rates[2], gains,
                  cfg[11], cfg[12], cfg[13], landing, cfg[10], hl)
            vcmd[0] = 0.0
            vcmd[1] = hl[0]
            vcmd[2] = hl[1]
            if n_traj < traj.shape[0]:
                row = traj[n_traj]
                row[0] = t
                for k in range(6):
                    row[1 + k] = x[k]
                row[7] = e[0]
                row[8] = e[1]
                row[9] = e[2]
                for k in range(3):
                    row[10 + k] = x[10 + k]
                row[13] = phase
                row[14] = target[0]
                row[15] = target[1]
                row[16] = hl[0]
                row[17] = hl[1]
                row[18] = wind_vec[1]
                n_traj += 1
        _llfc(vcmd, hl[2], x, dt, body, rotors, lp, integ, cmds)
        _rk4(body, rotors, x, cmds, wind_vec, dt, nxt)
        finite = True
        for k in range(N_STATE):
            if not math.isfinite(nxt[k]):
                finite = False
        if not finite:
            code = 3
            break
        for k in range(N_STATE):
            x[k] = nxt[k]
        i += 1
        ok, by, bz = _cable_in_body(x, cable)
        if ok and bz <= legs[2]:
            mask = _evaluate(x, cable, legs, crit)
            contact = 1 if mask == 0 else 0
            e = _euler(x[6:10])
            new, dwell, reason = _sm_step(phase, x[1] - cable[0], cable[1] - x[2],
                                          _wrap_line(e[2] - cable[2]), dwell, hlpc_dt, cfg,
                                          contact, False, target)
            if n_log < log.shape[0]:
                log[n_log, 0] = i * dt
                log[n_log, 1] = phase
                log[n_log, 2] = new
                log[n_log, 3] = reason
                n_log += 1
            phase = new
            code = 0 if mask == 0 else 1
            break
    return code, mask, n_traj, n_log, i * dt, x


def _wind_samples(spec: TrialSpec, sample_dt=0.01):
    duration = spec.timeout + 1.0
    ws = WindSpec(mean_speed=spec.wind_mean, std_dev=spec.wind_std, duration=duration,
                  sample_dt=sample_dt, seed=int(spec.wind_seed))
    return generate_profile(ws)


@dataclass(frozen=True)
class Simulator:
    """Everything a trial needs besides the :class:`TrialSpec`."""

    drone: DroneParams = field(default_factory=DroneParams.default)
    llfc: LLFCParams = field(default_factory=LLFCParams)
    criteria: SuccessCriteria = field(default_factory=SuccessCriteria)
    cable: Cable = field(default_factory=Cable)
    settings: SimSettings = field(default_factory=SimSettings)

    def run(self, spec: TrialSpec, record=False) -> TrialResult:
        profile = _wind_samples(spec)
        st = replace(self.settings, timeout=spec.timeout)
        n_rows = int(st.timeout * st.hlpc_rate) + 2 if record else 0
        traj = np.zeros((n_rows, len(TRAJ_COLUMNS)))
        log = np.zeros((64, 4))
        code, mask, n_traj, n_log, t_end, x = _simulate(
            self.drone.pack_body(), self.drone.pack_rotors(), self.llfc.pack(),
            spec.gains.pack(), spec.strategy.pack(landing_height(self.drone)),
            self.criteria.pack(), self.cable.pack(), profile.speeds, profile.spec.sample_dt,
            float(spec.y_offset), float(spec.height), float(spec.timeout), st.dt,
            st.hlpc_every, st.settle, traj, log)
        outcome = [Outcome.SUCCESS, Outcome.FAIL_CRITERIA, Outcome.TIMEOUT, Outcome.DIVERGED][code]
        phase_log = [(float(r[0]), LandingPhase(int(r[1])), LandingPhase(int(r[2])), Reason(int(r[3])))
                     for r in log[:n_log]]
        result = TrialResult(outcome=outcome, violated=_mask_to_ids(mask) if code == 1 else [],
                             touchdown_state=DroneState.from_array(x) if code < 2 else None,
                             phase_log=phase_log, duration=float(t_end))
        if record:
            result.trajectory = Trajectory(traj[:n_traj].copy())
            if spec.strategy.strategy is Strategy.TSLS:
                result.alignment_time = alignment_time(
                    result.trajectory, spec.strategy.alignment_box, spec.strategy.intermediate_target,
                    self.cable.heading)
        return result


def hold_position(duration, simulator: Simulator | None = None, gains: ControllerGains = ControllerGains(),
                  state: DroneState | None = None, wind=0.0):
    """Closed-loop position hold at the initial pose under constant wind along +y.

    Returns the ``(n, 13)`` state history sampled every dynamics step,
    starting with the initial state.
    """
    sim = simulator or Simulator()
    st = sim.settings
    body, rotors = sim.drone.pack_body(), sim.drone.pack_rotors()
    lp, g = sim.llfc.pack(), gains.pack()
    lim = StrategyConfig().limits
    x = (state or DroneState()).to_array()
    x0 = x.copy()
    nxt = np.empty(N_STATE)
    integ = np.zeros(8)
    cmds = np.empty(8)
    hl = np.zeros(3)
    vcmd = np.zeros(3)
    w = np.array([0.0, float(wind), 0.0])
    n = int(round(duration / st.dt))
    out = np.empty((n + 1, N_STATE))
    out[0] = x
    yaw0 = _euler(x0[6:10])[2]
    for i in range(n):
        if i % st.hlpc_every == 0:
            e = _euler(x[6:10])
            rates = _euler_rates(x[6:10], x[10:13])
            _hlpc(x0[1] - x[1], x0[2] - x[2], -_wrap_line(e[2] - yaw0), -x[4], -rates[2], g,
                  lim.lateral, lim.vertical, lim.yaw_rate, False, 0.2, hl)
            vcmd[0] = 0.5 * (x0[0] - x[0])  # the lateral PD has no x channel; a weak hold
            vcmd[1], vcmd[2] = hl[0], hl[1]
        _llfc(vcmd, hl[2], x, st.dt, body, rotors, lp, integ, cmds)
        _rk4(body, rotors, x, cmds, w, st.dt, nxt)
        x = nxt.copy()
        out[i + 1] = x
    return out


def run_trial(spec: TrialSpec, drone: DroneParams | None = None, record=False,
              simulator: Simulator | None = None) -> TrialResult:
    if simulator is None:
        simulator = Simulator() if drone is None else Simulator(drone=drone)
    elif drone is not None:
        simulator = replace(simulator, drone=drone)
    return simulator.run(spec, record=record)


def alignment_time(trajectory: Trajectory, alignment_box, target=(0.0, 2.0), cable_heading=0.0):
    """Time after which the pose stays inside the box for the rest of the first alignment phase.

    Only samples in the first contiguous ``ALIGNING`` stretch are considered
    (the whole trajectory if it carries no phase column).  ``None`` when the
    pose never settles.
    """
    t = np.asarray(trajectory["t"])
    if len(t) == 0:
        return None
    sel = np.ones(len(t), dtype=bool)
    try:
        phase = np.asarray(trajectory["phase"])
    except (ValueError, KeyError, IndexError):
        phase = None
    if phase is not None:
        idx = np.flatnonzero(phase == LandingPhase.ALIGNING)
        if len(idx) == 0:
            return None
        start = idx[0]
        stop = start
        while stop < len(phase) and phase[stop] == LandingPhase.ALIGNING:
            stop += 1
        sel[:] = False
        sel[start:stop] = True
        # the tick that hands over to READY_TO_LAND still belongs to the aligned stretch
        if stop < len(phase) and phase[stop] != LandingPhase.ALIGNING:
            sel[stop] = True
    dy = np.asarray(trajectory["y"]) - target[0]
    dz = -np.asarray(trajectory["z"]) - target[1]
    dpsi = (np.asarray(trajectory["yaw"]) - cable_heading + np.pi / 2) % np.pi - np.pi / 2
    inside = (np.abs(dy) <= alignment_box.y) & (np.abs(dz) <= alignment_box.z) & (np.abs(dpsi) <= alignment_box.psi)
    ts, ins = t[sel], inside[sel]
    if not ins[-1]:
        return None
    outside = np.flatnonzero(~ins)
    if len(outside) == 0:
        return float(ts[0] - ts[0]) if phase is None else float(ts[0] - t[0])
    return float(ts[outside[-1] + 1] - t[0])


class _Columns:
    """Minimal trajectory stand-in built from named arrays."""

    def __init__(self, **cols):
        self.cols = {k: np.asarray(v, dtype=float) for k, v in cols.items()}

    def __getitem__(self, name):
        if name not in self.cols:
            raise KeyError(name)
        return self.cols[name]


def trajectory_from_arrays(**cols):
    """Wrap plain arrays (``t``, ``y``, ``z``, ``yaw`` and optional ``phase``) for :func:`alignment_time`."""
    return _Columns(**cols)


# --------------------------------------------------------------------------
# Monte Carlo maps

MASK64 = (1 << 64) - 1


def _splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def trial_seed(master_seed, y, z, k):
    """Stable 64-bit seed for trial ``k`` of the cell centred at ``(y, z)``.

    The cell is keyed by its centre rounded to the millimetre, so adding cells
    or changing the traversal order never alters an individual trial.
    """
    h = _splitmix64(int(master_seed) & MASK64)
    for part in (int(round(y * 1000)), int(round(z * 1000)), int(k)):
        h = _splitmix64(h ^ (part & MASK64))
    return h


@dataclass(frozen=True)
class Grid:
    y_min: float = -1.5
    y_max: float = 1.5
    y_step: float = 0.1
    z_min: float = 1.5
    z_max: float = 2.5
    z_step: float = 0.1

    def __post_init__(self):
        if not (self.y_step > 0 and self.z_step > 0):
            raise ValueError("grid steps must be positive")
        if self.y_max < self.y_min or self.z_max < self.z_min:
            raise ValueError("empty grid")
        if self.z_min <= 0:
            raise ValueError("heights must be above the cable")

    @property
    def ys(self):
        n = int(math.floor((self.y_max - self.y_min) / self.y_step + 1e-9)) + 1
        return np.round(self.y_min + self.y_step * np.arange(n), 9)

    @property
    def zs(self):
        n = int(math.floor((self.z_max - self.z_min) / self.z_step + 1e-9)) + 1
        return np.round(self.z_min + self.z_step * np.arange(n), 9)

    @property
    def shape(self):
        return len(self.zs), len(self.ys)


@dataclass
class SuccessMap:
    """Success probabilities; ``cells[i, j]`` belongs to height ``zs[i]`` and offset ``ys[j]``."""

    grid: Grid
    n_trials: int
    wind_mean: float
    cells: np.ndarray

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=float)
        if self.cells.shape != self.grid.shape:
            raise ValueError(f"cells shape {self.cells.shape} does not match grid {self.grid.shape}")

    @property
    def ys(self):
        return self.grid.ys

    @property
    def zs(self):
        return self.grid.zs


def _run_cell_job(job):
    sim, spec_kwargs, seeds = job
    wins = 0
    for seed in seeds:
        res = sim.run(TrialSpec(wind_seed=seed, **spec_kwargs))
        wins += res.success
    return wins


def resolve_workers(workers):
    if workers is None or workers == 0:
        env = os.environ.get("CABLELAND_WORKERS")
        workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(workers))


def _run_jobs(jobs, workers, progress=None):
    results = [None] * len(jobs)
    if workers <= 1 or len(jobs) <= 1:
        for i, job in enumerate(jobs):
            results[i] = _run_cell_job(job)
            if progress:
                progress(i + 1, len(jobs))
        return results
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for i, wins in enumerate(pool.map(_run_cell_job, jobs, chunksize=max(1, len(jobs) // (8 * workers)))):
            results[i] = wins
            if progress:
                progress(i + 1, len(jobs))
    return results


def _resolve_sim(simulator, drone):
    sim = simulator or Simulator()
    return sim if drone is None else replace(sim, drone=drone)


def monte_carlo_map(grid: Grid, n_trials: int, wind_mean: float, strategy: StrategyConfig,
                    gains: ControllerGains, simulator: Simulator | None = None,
                    master_seed: int = 0, workers: int = 1, timeout: float = 60.0,
                    wind_std: float = WIND_STD, progress=None, drone: DroneParams | None = None) -> SuccessMap:
    """Success probability of every grid cell over ``n_trials`` seeded wind profiles."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    sim = _resolve_sim(simulator, drone)
    ys, zs = grid.ys, grid.zs
    if len(ys) == 0 or len(zs) == 0:
        raise ValueError("empty grid")
    jobs = []
    for z in zs:
        for y in ys:
            seeds = [trial_seed(master_seed, y, z, k) for k in range(n_trials)]
            kw = dict(y_offset=float(y), height=float(z), wind_mean=wind_mean, strategy=strategy,
                      gains=gains, timeout=timeout, wind_std=wind_std)
            jobs.append((sim, kw, seeds))
    wins = _run_jobs(jobs, resolve_workers(workers), progress)
    cells = np.array(wins, dtype=float).reshape(len(zs), len(ys)) / n_trials
    return SuccessMap(grid, n_trials, wind_mean, cells)


def _same_grid(a: SuccessMap, b: SuccessMap):
    return a.cells.shape == b.cells.shape and np.allclose(a.ys, b.ys) and np.allclose(a.zs, b.zs)


def merge_maps(maps) -> SuccessMap:
    """Cell-wise minimum: a cell is 100 % in the result iff it is 100 % everywhere."""
    maps = list(maps)
    if not maps:
        raise ValueError("nothing to merge")
    first = maps[0]
    for m in maps[1:]:
        if not _same_grid(first, m):
            raise ValueError("cannot merge maps with different grids")
    cells = np.minimum.reduce([m.cells for m in maps])
    n = first.n_trials if all(m.n_trials == first.n_trials for m in maps) else 0
    wind = max(m.wind_mean for m in maps)
    return SuccessMap(first.grid, n, wind, cells.copy())


@dataclass(frozen=True)
class Zone:
    cells: frozenset
    area: float
    bbox: Optional[tuple]  # (y_lo, y_hi, z_lo, z_hi) of cell edges

    @property
    def width(self):
        return 0.0 if self.bbox is None else self.bbox[1] - self.bbox[0]

    @property
    def height(self):
        return 0.0 if self.bbox is None else self.bbox[3] - self.bbox[2]


def extract_zone(smap: SuccessMap, threshold: float = 1.0) -> Zone:
    """Cells at or above ``threshold`` with their total area and bounding box."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    g = smap.grid
    idx = np.argwhere(smap.cells >= threshold - 1e-12)
    cells = frozenset((int(i), int(j)) for i, j in idx)
    area = len(cells) * g.y_step * g.z_step
    if not cells:
        return Zone(cells, 0.0, None)
    ys, zs = smap.ys, smap.zs
    jy = idx[:, 1]
    iz = idx[:, 0]
    bbox = (float(ys[jy.min()] - g.y_step / 2), float(ys[jy.max()] + g.y_step / 2),
            float(zs[iz.min()] - g.z_step / 2), float(zs[iz.max()] + g.z_step / 2))
    return Zone(cells, area, bbox)


# --------------------------------------------------------------------------
# gain sweep and strategy comparison

PROBE_STARTS = ((-1.0, 2.0), (-0.5, 2.0), (0.0, 2.0), (0.5, 2.0), (1.0, 2.0))
ALIGNMENT_LIMIT = 5.0


@dataclass
class SweepRow:
    kp: float
    kd: float
    zone_area: float
    max_alignment_time: float
    success_map: SuccessMap = field(repr=False, default=None)

    @property
    def eligible(self):
        return self.max_alignment_time < ALIGNMENT_LIMIT


def matlab_range(start, step, stop):
    """``start:step:stop`` with the endpoint appended when the lattice misses it."""
    n = int(math.floor((stop - start) / step + 1e-9))
    vals = [round(start + k * step, 10) for k in range(n + 1)]
    if abs(vals[-1] - stop) > 1e-9:
        vals.append(stop)
    return vals


def probe_alignment_time(gains, wind_mean, strategy: StrategyConfig, simulator: Simulator,
                         master_seed=0, starts=PROBE_STARTS, timeout=60.0, wind_std=WIND_STD):
    """Worst alignment time over the probe starts (``inf`` if any never settles)."""
    tsls = replace(strategy, strategy=Strategy.TSLS)
    worst = 0.0
    for k, (y, z) in enumerate(starts):
        spec = TrialSpec(y_offset=y, height=z, wind_mean=wind_mean,
                         wind_seed=trial_seed(master_seed ^ 0xA11C, y, z, k), strategy=tsls,
                         gains=gains, timeout=timeout, wind_std=wind_std)
        res = simulator.run(spec, record=True)
        if res.alignment_time is None:
            return math.inf
        worst = max(worst, res.alignment_time)
    return worst


def rank_sweep(rows):
    """Eligible rows first, then by zone area; ties go to the gentler (smaller) gains."""
    return sorted(rows, key=lambda r: (not r.eligible, -round(r.zone_area, 9), r.kp + r.kd, r.kp))


def gain_sweep(kp_values, kd_values, wind_mean, grid: Grid, n_trials, simulator: Simulator | None = None,
               master_seed=0, strategy: StrategyConfig = StrategyConfig(),
               base_gains: ControllerGains = ControllerGains(), workers=1, pairs=None,
               timeout=60.0, progress=None, drone: DroneParams | None = None):
    """Success-zone area and alignment time for each lateral PD pair, ranked.

    ``pairs`` overrides the Cartesian product of ``kp_values`` x ``kd_values``.
    """
    sim = _resolve_sim(simulator, drone)
    if pairs is None:
        if not kp_values or not kd_values:
            raise ValueError("gain lists must not be empty")
        pairs = [(kp, kd) for kp in kp_values for kd in kd_values]
    rows = []
    for kp, kd in pairs:
        gains = replace(base_gains, kp_y=float(kp), kd_y=float(kd))
        smap = monte_carlo_map(grid, n_trials, wind_mean, strategy, gains, sim, master_seed,
                               workers, timeout)
        t_align = probe_alignment_time(gains, wind_mean, strategy, sim, master_seed, timeout=timeout)
        rows.append(SweepRow(float(kp), float(kd), extract_zone(smap, 1.0).area, t_align, smap))
        if progress:
            progress(len(rows), len(pairs))
    return rank_sweep(rows)


@dataclass
class Comparison:
    dls: SuccessMap
    tsls: SuccessMap

    @property
    def delta(self):
        return self.tsls.cells - self.dls.cells


def compare_strategies(wind_mean, grid: Grid, n_trials, gains: ControllerGains,
                       simulator: Simulator | None = None, master_seed=0,
                       strategy: StrategyConfig = StrategyConfig(), workers=1, timeout=60.0,
                       progress=None, drone: DroneParams | None = None) -> Comparison:
    """DLS and TSLS maps over identical wind seeds."""
    simulator = _resolve_sim(simulator, drone)
    maps = {}
    for s in (Strategy.DLS, Strategy.TSLS):
        maps[s] = monte_carlo_map(grid, n_trials, wind_mean, replace(strategy, strategy=s), gains,
                                  simulator, master_seed, workers, timeout, progress=progress)
    return Comparison(maps[Strategy.DLS], maps[Strategy.TSLS])
