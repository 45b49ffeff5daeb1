"""High-level position control, low-level flight control and the landing state machine.

The high-level position controller (HLPC) is three decoupled loops: PD on the
lateral offset, PD on yaw and P on height.  It emits velocity commands, which
a surrogate autopilot (the LLFC) tracks through a velocity -> attitude ->
body-rate cascade and an octo-coaxial mixer.  The landing state machine picks
the setpoint the HLPC chases for the direct (DLS) and two-stage (TSLS)
strategies.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .dynamics import CMD_MAX, CMD_MIN, DroneParams, DroneState


class LandingPhase(enum.IntEnum):
    READY_TO_ALIGN = 0
    ALIGNING = 1
    READY_TO_LAND = 2
    LANDING = 3
    LANDED = 4
    ABORTED = 5


class Strategy(str, enum.Enum):
    DLS = "dls"
    TSLS = "tsls"


class Reason(enum.IntEnum):
    NONE = 0
    ENGAGE = 1
    ALIGNED = 2
    PROCEED = 3
    ABORT_BOX = 4
    TIMEOUT = 5
    CONTACT_OK = 6
    CONTACT_FAIL = 7


@dataclass(frozen=True)
class ControllerGains:
    kp_y: float = 0.5
    kd_y: float = 0.1
    kp_z: float = 0.8
    kp_psi: float = 1.2
    kd_psi: float = 0.2

    def __post_init__(self):
        for name in ("kp_y", "kd_y", "kp_z", "kp_psi", "kd_psi"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"gain {name} must be finite and >= 0, got {v}")

    def pack(self):
        return np.array([self.kp_y, self.kd_y, self.kp_z, self.kp_psi, self.kd_psi])


@dataclass(frozen=True)
class CommandLimits:
    lateral: float = 1.0
    vertical: float = 0.5
    yaw_rate: float = 0.5

    def __post_init__(self):
        if min(self.lateral, self.vertical, self.yaw_rate) <= 0:
            raise ValueError("command limits must be positive")


@dataclass(frozen=True)
class VelocityCommand:
    vy_cmd: float = 0.0
    vz_cmd: float = 0.0
    yaw_rate_cmd: float = 0.0
    vx_cmd: float = 0.0


@dataclass(frozen=True)
class Box:
    """Symmetric tolerance box on (lateral m, vertical m, yaw rad)."""

    y: float
    z: float
    psi: float

    def __post_init__(self):
        if min(self.y, self.z, self.psi) <= 0:
            raise ValueError("box half-sizes must be positive")

    def contains(self, dy, dz, dpsi):
        return abs(dy) <= self.y and abs(dz) <= self.z and abs(dpsi) <= self.psi


@dataclass(frozen=True)
class StrategyConfig:
    strategy: Strategy = Strategy.TSLS
    intermediate_target: tuple = (0.0, 2.0)  # (lateral offset m, height above cable m)
    alignment_box: Box = field(default_factory=lambda: Box(0.10, 0.15, 0.05))
    hold_time: float = 1.0
    descent_speed_cmd: float = 0.2
    abort_box: Box = field(default_factory=lambda: Box(0.75, 0.5, 0.3))
    limits: CommandLimits = field(default_factory=CommandLimits)

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        a, b = self.alignment_box, self.abort_box
        if not (a.y < b.y and a.z < b.z and a.psi < b.psi):
            raise ValueError("alignment_box must lie strictly inside abort_box")
        if not self.descent_speed_cmd > 0:
            raise ValueError("descent_speed_cmd must be positive")
        if not self.hold_time >= 0:
            raise ValueError("hold_time must be >= 0")
        if len(self.intermediate_target) != 2 or not self.intermediate_target[1] > 0:
            raise ValueError("intermediate_target is (y_offset, height>0)")

    def pack(self, landing_height):
        a, b, lim = self.alignment_box, self.abort_box, self.limits
        return np.array([1.0 if self.strategy is Strategy.TSLS else 0.0,
                         self.intermediate_target[0], self.intermediate_target[1],
                         a.y, a.z, a.psi, self.hold_time,
                         b.y, b.z, b.psi, self.descent_speed_cmd,
                         lim.lateral, lim.vertical, lim.yaw_rate, landing_height])


@dataclass(frozen=True)
class LLFCParams:
    """Gains of the surrogate autopilot cascade."""

    kv_xy: float = 5.0
    ki_xy: float = 3.0
    kv_z: float = 3.0
    ki_z: float = 1.0
    k_att: float = 8.0
    k_rate: float = 20.0
    ki_rate: float = 2.0
    max_tilt: float = 0.35
    int_limit: float = 2.0
    cmd_tau: float = 0.4  # horizontal setpoint smoothing (s); 0 disables
    k_ff: float = 1.0  # feedforward of the smoothed setpoint's rate of change

    def __post_init__(self):
        if min(self.kv_xy, self.kv_z, self.k_att, self.k_rate, self.max_tilt) <= 0:
            raise ValueError("LLFC proportional gains and max_tilt must be positive")
        if min(self.ki_xy, self.ki_z, self.ki_rate, self.int_limit, self.cmd_tau, self.k_ff) < 0:
            raise ValueError("LLFC integral gains must be non-negative")

    def pack(self):
        return np.array([self.kv_xy, self.ki_xy, self.kv_z, self.ki_z, self.k_att,
                         self.k_rate, self.ki_rate, self.max_tilt, self.int_limit,
                         self.cmd_tau, self.k_ff])


def landing_height(params: DroneParams) -> float:
    """Centre-of-mass height that puts the cable mid-way up the legs zone."""
    lz = params.legs_zone
    return lz.bottom - 0.5 * lz.height


# --------------------------------------------------------------------------
# kernels

@numba.njit(cache=True)
def _clamp(x, lo, hi):
    return min(hi, max(lo, x))


@numba.njit(cache=True)
def _hlpc(ey, ez, epsi, dey, depsi, gains, lim_y, lim_z, lim_r, landing, descent, out):
    out[0] = _clamp(gains[0] * ey + gains[1] * dey, -lim_y, lim_y)
    vz = _clamp(gains[2] * ez, -lim_z, lim_z)
    if landing and vz > descent:
        vz = descent
    out[1] = vz
    out[2] = _clamp(gains[3] * epsi + gains[4] * depsi, -lim_r, lim_r)


@numba.njit(cache=True)
def _mix(thrust, mx, my, mz, rotors, cmds):
    sxx = 0.0
    syy = 0.0
    for j in range(4):
        sxx += rotors[j, 0] ** 2
        syy += rotors[j, 1] ** 2
    # yaw has the lowest priority: shrink the upper/lower split until every pair fits
    scale = 1.0
    for j in range(4):
        rot = rotors[j]
        tj = 0.25 * thrust - mx * rot[1] / syy + my * rot[0] / sxx
        kt, eta, kq = rot[5], rot[6], rot[10]
        diff = 0.25 * mz / (kq * rot[3])
        if diff == 0.0:
            continue
        lo2, hi2 = rot[11] ** 2, rot[12] ** 2
        s = tj / kt
        # lower = (s - d)/(1+eta), upper = (s + eta d)/(1+eta), both within [lo2, hi2]
        if diff > 0.0:
            room = min(s - (1.0 + eta) * lo2, ((1.0 + eta) * hi2 - s) / eta)
        else:
            room = min((1.0 + eta) * hi2 - s, (s - (1.0 + eta) * lo2) / eta)
        scale = min(scale, max(0.0, room) / abs(diff))
    for j in range(4):
        rot = rotors[j]
        tj = 0.25 * thrust - mx * rot[1] / syy + my * rot[0] / sxx
        kt, eta, kq = rot[5], rot[6], rot[10]
        diff = scale * 0.25 * mz / (kq * rot[3])  # omega_u^2 - omega_l^2
        lower = (tj / kt - diff) / (1.0 + eta)
        upper = lower + diff
        for i in range(2):
            w2 = upper if i == 0 else lower
            w = math.sqrt(w2) if w2 > 0.0 else 0.0
            c = CMD_MIN + (w - rot[11]) / (rot[12] - rot[11]) * (CMD_MAX - CMD_MIN)
            cmds[2 * j + i] = _clamp(c, CMD_MIN, CMD_MAX)


@numba.njit(cache=True)
def _llfc(vcmd, yaw_rate_cmd, x, dt, body, rotors, lp, integ, cmds):
    """Velocity -> attitude -> rate cascade plus mixer.

    ``integ`` (length 8) holds the six PI integrators followed by the two
    smoothed horizontal setpoints; it is updated in place.
    """
    m, g = body[0], body[7]
    ilim = lp[8]
    a = np.empty(3)
    for k in range(3):
        target = vcmd[k]
        ff = 0.0
        if k < 2:
            prev = integ[6 + k]
            if lp[9] > 0.0:
                integ[6 + k] += (vcmd[k] - integ[6 + k]) * min(1.0, dt / lp[9])
                ff = lp[10] * (integ[6 + k] - prev) / dt
            else:
                integ[6 + k] = vcmd[k]
            target = integ[6 + k]
        ev = target - x[3 + k]
        integ[k] = _clamp(integ[k] + ev * dt, -ilim, ilim)
        if k < 2:
            a[k] = lp[0] * ev + lp[1] * integ[k] + ff
        else:
            a[k] = lp[2] * ev + lp[3] * integ[k]
    q = x[6:10]
    w, qx, qy, qz = q[0], q[1], q[2], q[3]
    roll = math.atan2(2 * (w * qx + qy * qz), 1 - 2 * (qx * qx + qy * qy))
    pitch = math.asin(_clamp(2 * (w * qy - qz * qx), -1.0, 1.0))
    yaw = math.atan2(2 * (w * qz + qx * qy), 1 - 2 * (qy * qy + qz * qz))
    cy, sy = math.cos(yaw), math.sin(yaw)
    a_fwd = cy * a[0] + sy * a[1]
    a_right = -sy * a[0] + cy * a[1]
    tilt = lp[7]
    pitch_d = _clamp(-a_fwd / g, -tilt, tilt)
    roll_d = _clamp(a_right / g, -tilt, tilt)
    thrust = m * (g - a[2]) / (math.cos(roll) * math.cos(pitch))
    thrust = _clamp(thrust, 0.0, 4.0 * m * g)
    sp = np.empty(3)
    sp[0] = lp[4] * (roll_d - roll)
    sp[1] = lp[4] * (pitch_d - pitch)
    sp[2] = yaw_rate_cmd
    tq = np.empty(3)
    for k in range(3):
        er = sp[k] - x[10 + k]
        integ[3 + k] = _clamp(integ[3 + k] + er * dt, -ilim, ilim)
        tq[k] = body[1 + k] * (lp[5] * er + lp[6] * integ[3 + k])
    _mix(thrust, tq[0], tq[1], tq[2], rotors, cmds)


@numba.njit(cache=True)
def _wrap_line(a):
    # heading error of an undirected line, in [-pi/2, pi/2)
    return (a + 0.5 * math.pi) % math.pi - 0.5 * math.pi


@numba.njit(cache=True)
def _sm_step(phase, y, h, psi, dwell, dt, cfg, contact, timed_out, target):
    """Advance the landing state machine one tick.

    ``contact`` is -1 (no cable contact), 0 (contact, criteria failed) or
    1 (contact, success).  Writes the (lateral, height) setpoint into
    ``target`` and returns ``(phase, dwell, reason)``.
    """
    tsls = cfg[0] > 0.5
    reason = 0
    new = phase
    if phase == 4 or phase == 5:
        pass
    elif timed_out:
        new = 5
        reason = 5
    elif phase == 0:
        new = 1 if tsls else 3
        reason = 1
        dwell = 0.0
    elif phase == 1:
        inside = (abs(y - cfg[1]) <= cfg[3] and abs(h - cfg[2]) <= cfg[4]
                  and abs(psi) <= cfg[5])
        dwell = dwell + dt if inside else 0.0
        if dwell >= cfg[6] - 1e-9:
            new = 2
            reason = 2
    elif phase == 2:
        new = 3
        reason = 3
    elif phase == 3:
        if contact == 1:
            new = 4
            reason = 6
        elif contact == 0:
            new = 5
            reason = 7
        elif abs(y) > cfg[7] or abs(psi) > cfg[9] or h > cfg[2] + cfg[8]:
            reason = 4
            if tsls:
                new = 1
                dwell = 0.0
            else:
                new = 5
    else:
        new = -1
    if new == 1 or (new == 0 and tsls):
        target[0] = cfg[1]
        target[1] = cfg[2]
    else:
        target[0] = 0.0
        target[1] = cfg[14]
    return new, dwell, reason


# --------------------------------------------------------------------------
# public API

def hlpc_update(error_y, error_z, error_psi, error_rates, gains: ControllerGains,
                limits: CommandLimits = CommandLimits(), landing=False,
                descent_speed_cmd=0.2) -> VelocityCommand:
    """Decoupled PD/P position control.

    ``error_z`` is measured along NED down (target minus current), so a
    positive ``vz_cmd`` descends.  ``error_rates`` is ``(d error_y/dt,
    d error_psi/dt)``; the HLPC holds no internal state.
    """
    dey, depsi = error_rates
    out = np.empty(3)
    _hlpc(float(error_y), float(error_z), float(error_psi), float(dey), float(depsi),
          gains.pack(), limits.lateral, limits.vertical, limits.yaw_rate,
          bool(landing), float(descent_speed_cmd), out)
    return VelocityCommand(vy_cmd=float(out[0]), vz_cmd=float(out[1]), yaw_rate_cmd=float(out[2]))


class LowLevelController:
    """Stateful wrapper around the LLFC kernel (holds the PI integrators)."""

    def __init__(self, params: DroneParams, llfc: LLFCParams = LLFCParams()):
        self.params = params
        self.llfc = llfc
        self._body = params.pack_body()
        self._rotors = params.pack_rotors()
        self._lp = llfc.pack()
        self.integrators = np.zeros(8)

    def reset(self):
        self.integrators[:] = 0.0

    def update(self, vel_cmd: VelocityCommand, state: DroneState, dt: float) -> np.ndarray:
        cmds = np.empty(8)
        v = np.array([vel_cmd.vx_cmd, vel_cmd.vy_cmd, vel_cmd.vz_cmd])
        _llfc(v, float(vel_cmd.yaw_rate_cmd), state.to_array(), float(dt), self._body,
              self._rotors, self._lp, self.integrators, cmds)
        return cmds


def llfc_update(vel_cmd: VelocityCommand, state: DroneState, dt: float,
                params: DroneParams, controller: LowLevelController | None = None) -> np.ndarray:
    """Eight motor pulses (upper, lower for each pair) tracking ``vel_cmd``."""
    if controller is None:
        controller = LowLevelController(params)
    return controller.update(vel_cmd, state, dt)


def state_machine_step(phase: LandingPhase, rel_pose, cfg: StrategyConfig, dwell=0.0, dt=0.05,
                       contact=None, timed_out=False, landing_height_m=0.225):
    """One tick of the landing state machine.

    ``rel_pose`` is ``(y, height, yaw_error)`` of the drone relative to the
    cable.  ``contact`` is ``None`` before cable-zone entry, otherwise the
    boolean verdict of the success function.  Returns
    ``(phase, target, dwell, reason)`` with ``target = (y, height)``.
    """
    try:
        phase = LandingPhase(phase)
    except ValueError:
        raise ValueError(f"unknown landing phase {phase!r}") from None
    y, h, psi = rel_pose
    c = -1 if contact is None else int(bool(contact))
    target = np.zeros(2)
    new, dwell, reason = _sm_step(int(phase), float(y), float(h), float(psi), float(dwell),
                                  float(dt), cfg.pack(landing_height_m), c, bool(timed_out), target)
    return LandingPhase(new), (float(target[0]), float(target[1])), float(dwell), Reason(reason)
