"""Rigid-body dynamics of the coaxial octocopter.

Forces come from three sources: four coaxial rotor pairs (a momentum-theory
surrogate that keeps the qualitative airspeed effects), structural drag of an
equivalent flat plate acting above the centre of mass, and gravity.  The
equations of motion are integrated with fixed-step RK4.

Conventions: inertial frame is NED, body frame is FRD, the attitude is a unit
quaternion ``(w, x, y, z)`` rotating body vectors into the inertial frame.
``airspeed`` always means the velocity of the vehicle (or a hub) relative to
the surrounding air, so drag opposes it.

The numerical core is a set of ``numba`` kernels operating on packed float
arrays; the dataclasses below are the public face and know how to pack
themselves.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numba
import numpy as np

G = 9.81
CMD_MIN = 1200.0
CMD_MAX = 1700.0
HOVER_CMD = 1450.0
MU_MAX = 1.0  # advance-ratio cap; keeps the wrench continuous as a rotor spins down

# packed layouts ------------------------------------------------------------
# body:   mass, Ix, Iy, Iz, area, rho, cd_offset, g, legs_hw, legs_h, legs_bottom
# rotors: x, y, z, spin, radius, k_thrust, eta, k_mu, k_axial, k_hub, k_torque,
#         omega_min, omega_max
# state:  x, y, z, vx, vy, vz, qw, qx, qy, qz, p, q, r
N_STATE = 13


@dataclass(frozen=True)
class LegsZone:
    """Capture rectangle between the legs, in the body y-z plane.

    ``bottom`` is the depth of the leg tips below the centre of mass; the zone
    spans ``[bottom - height, bottom]`` along body +z and ``+-half_width``
    laterally.
    """

    half_width: float = 0.2
    height: float = 0.15
    bottom: float = 0.30

    def __post_init__(self):
        if not (self.half_width > 0 and self.height > 0):
            raise ValueError("legs zone needs positive half_width and height")
        if not self.bottom >= self.height:
            raise ValueError("legs zone must sit below the centre of mass")


@dataclass(frozen=True)
class RotorPairParams:
    position: tuple = (0.4, 0.4, 0.0)
    spin_sign: int = 1
    radius: float = 0.30
    k_thrust: float = 1.3093e-4
    coax_efficiency: float = 0.85
    k_mu: float = 1.5
    k_axial: float = 4.0e-3
    k_hub: float = 0.05
    k_torque: float = 2.5e-6
    omega_min: float = 0.0
    omega_max: float = 900.0

    def __post_init__(self):
        if len(self.position) != 3:
            raise ValueError("rotor position must have 3 components")
        if self.spin_sign not in (1, -1):
            raise ValueError("spin_sign must be +1 or -1")
        if not (self.radius > 0 and self.k_thrust > 0):
            raise ValueError("radius and k_thrust must be positive")
        if not 0 < self.coax_efficiency <= 1:
            raise ValueError("coax_efficiency must lie in (0, 1]")
        if not (self.omega_max > self.omega_min >= 0):
            raise ValueError("cmd_to_omega must be increasing and non-negative")
        if min(self.k_mu, self.k_axial, self.k_hub, self.k_torque) < 0:
            raise ValueError("rotor coefficients must be non-negative")

    def cmd_to_omega(self, cmd):
        cmd = np.clip(cmd, CMD_MIN, CMD_MAX)
        return self.omega_min + (self.omega_max - self.omega_min) * (cmd - CMD_MIN) / (CMD_MAX - CMD_MIN)

    def pack(self):
        return np.array([*self.position, self.spin_sign, self.radius, self.k_thrust,
                         self.coax_efficiency, self.k_mu, self.k_axial, self.k_hub,
                         self.k_torque, self.omega_min, self.omega_max], dtype=np.float64)


def calibrated_k_thrust(mass, g=G, coax_efficiency=0.85, n_pairs=4,
                        omega_hover=None, omega_min=0.0, omega_max=900.0,
                        hover_cmd=HOVER_CMD):
    """Per-rotor thrust coefficient that makes ``hover_cmd`` balance the weight."""
    if omega_hover is None:
        omega_hover = omega_min + (omega_max - omega_min) * (hover_cmd - CMD_MIN) / (CMD_MAX - CMD_MIN)
    return mass * g / (n_pairs * (1.0 + coax_efficiency) * omega_hover**2)


def default_rotor_pairs(arm=0.4, mass=20.0, g=G, **overrides):
    """Four pairs at ``(+-arm, +-arm, 0)``; diagonal pairs share a spin sign."""
    eta = overrides.get("coax_efficiency", RotorPairParams.coax_efficiency)
    kt = calibrated_k_thrust(mass, g, eta,
                             omega_min=overrides.get("omega_min", 0.0),
                             omega_max=overrides.get("omega_max", 900.0))
    overrides.setdefault("k_thrust", kt)
    layout = [((arm, arm, 0.0), 1), ((-arm, -arm, 0.0), 1),
              ((arm, -arm, 0.0), -1), ((-arm, arm, 0.0), -1)]
    return tuple(RotorPairParams(position=p, spin_sign=s, **overrides) for p, s in layout)


@dataclass(frozen=True)
class DroneParams:
    mass: float = 20.0
    inertia_diag: tuple = (3.52, 3.31, 3.84)
    flat_plate_area: float = 0.512
    air_density: float = 1.225
    cd_offset: float = 0.2
    gravity: float = G
    rotor_pairs: tuple = field(default_factory=default_rotor_pairs)
    legs_zone: LegsZone = field(default_factory=LegsZone)

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if len(self.inertia_diag) != 3 or min(self.inertia_diag) <= 0:
            raise ValueError("inertia_diag needs three positive components")
        if not self.flat_plate_area > 0:
            raise ValueError("flat_plate_area must be positive")
        if not self.air_density > 0:
            raise ValueError("air_density must be positive")
        if len(self.rotor_pairs) != 4:
            raise ValueError("exactly 4 rotor pairs are required")
        pos = np.array([rp.position for rp in self.rotor_pairs], dtype=float)
        sums = [pos[:, 0].sum(), pos[:, 1].sum(), (pos[:, 0] * pos[:, 1]).sum()]
        if np.max(np.abs(sums)) > 1e-9 or np.any(np.abs(pos[:, :2]) < 1e-9):
            raise ValueError("rotor pairs must be symmetric about the body x and y axes")

    @classmethod
    def default(cls, mass=20.0, **kw):
        g = kw.get("gravity", G)
        return cls(mass=mass, rotor_pairs=default_rotor_pairs(mass=mass, g=g), **kw)

    def with_mass(self, mass):
        """Copy with a new mass and rotor thrust re-calibrated to hover at 1450 us."""
        eta = self.rotor_pairs[0].coax_efficiency
        kt = calibrated_k_thrust(mass, self.gravity, eta, omega_min=self.rotor_pairs[0].omega_min,
                                 omega_max=self.rotor_pairs[0].omega_max)
        return replace(self, mass=mass, rotor_pairs=tuple(replace(rp, k_thrust=kt) for rp in self.rotor_pairs))

    def pack_body(self):
        lz = self.legs_zone
        return np.array([self.mass, *self.inertia_diag, self.flat_plate_area,
                         self.air_density, self.cd_offset, self.gravity,
                         lz.half_width, lz.height, lz.bottom], dtype=np.float64)

    def pack_rotors(self):
        return np.vstack([rp.pack() for rp in self.rotor_pairs])


@dataclass
class DroneState:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    attitude: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    angular_rate: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(3)
        self.attitude = np.asarray(self.attitude, dtype=float).reshape(4)
        self.angular_rate = np.asarray(self.angular_rate, dtype=float).reshape(3)

    def to_array(self):
        return np.concatenate([self.position, self.velocity, self.attitude, self.angular_rate])

    @classmethod
    def from_array(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(x[0:3].copy(), x[3:6].copy(), x[6:10].copy(), x[10:13].copy())

    @classmethod
    def from_euler(cls, position=(0, 0, 0), velocity=(0, 0, 0), roll=0.0, pitch=0.0, yaw=0.0,
                   angular_rate=(0, 0, 0)):
        return cls(position, velocity, euler_to_quat(roll, pitch, yaw), angular_rate)

    def euler(self):
        """(roll, pitch, yaw) in radians, Z-Y-X convention."""
        return tuple(float(a) for a in _euler(self.attitude))

    def euler_rates(self):
        """(roll rate, pitch rate, yaw rate) in rad/s."""
        return tuple(float(a) for a in _euler_rates(self.attitude, self.angular_rate))

    def __eq__(self, other):
        if not isinstance(other, DroneState):
            return NotImplemented
        return np.array_equal(self.to_array(), other.to_array())


@dataclass(frozen=True)
class ForceTorque:
    force: np.ndarray
    torque: np.ndarray

    @classmethod
    def from_array(cls, w):
        return cls(np.array(w[:3], dtype=float), np.array(w[3:], dtype=float))


def euler_to_quat(roll, pitch, yaw):
    cr, sr = math.cos(roll / 2), math.sin(roll / 2)
    cp, sp = math.cos(pitch / 2), math.sin(pitch / 2)
    cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
    return np.array([cr * cp * cy + sr * sp * sy,
                     sr * cp * cy - cr * sp * sy,
                     cr * sp * cy + sr * cp * sy,
                     cr * cp * sy - sr * sp * cy])


# --------------------------------------------------------------------------
# kernels

@numba.njit(cache=True)
def _rotation(q):
    w, x, y, z = q[0], q[1], q[2], q[3]
    R = np.empty((3, 3))
    R[0, 0] = 1 - 2 * (y * y + z * z)
    R[0, 1] = 2 * (x * y - w * z)
    R[0, 2] = 2 * (x * z + w * y)
    R[1, 0] = 2 * (x * y + w * z)
    R[1, 1] = 1 - 2 * (x * x + z * z)
    R[1, 2] = 2 * (y * z - w * x)
    R[2, 0] = 2 * (x * z - w * y)
    R[2, 1] = 2 * (y * z + w * x)
    R[2, 2] = 1 - 2 * (x * x + y * y)
    return R


@numba.njit(cache=True)
def _euler(q):
    w, x, y, z = q[0], q[1], q[2], q[3]
    roll = math.atan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y))
    s = 2 * (w * y - z * x)
    s = min(1.0, max(-1.0, s))
    pitch = math.asin(s)
    yaw = math.atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z))
    return np.array([roll, pitch, yaw])


@numba.njit(cache=True)
def _euler_rates(q, omega):
    e = _euler(q)
    sphi, cphi = math.sin(e[0]), math.cos(e[0])
    cth = math.cos(e[1])
    tth = math.tan(e[1])
    p, qq, r = omega[0], omega[1], omega[2]
    return np.array([p + (sphi * qq + cphi * r) * tth,
                     cphi * qq - sphi * r,
                     (sphi * qq + cphi * r) / cth])


@numba.njit(cache=True)
def _cmd_to_omega(rot, cmd):
    c = min(CMD_MAX, max(CMD_MIN, cmd))
    return rot[11] + (rot[12] - rot[11]) * (c - CMD_MIN) / (CMD_MAX - CMD_MIN)


@numba.njit(cache=True)
def _pair_wrench(rot, cmd_upper, cmd_lower, u, v, w, out):
    """Force/torque of one coaxial pair about the centre of mass (body frame)."""
    radius, kt, eta, kmu, kax, khub, kq = rot[4], rot[5], rot[6], rot[7], rot[8], rot[9], rot[10]
    spin = rot[3]
    lat = math.sqrt(u * u + v * v)
    climb = -w  # positive when the hub moves up through the air
    thrust_total = 0.0
    mx = 0.0
    my = 0.0
    mz = 0.0
    for i in range(2):
        if i == 0:
            omega = _cmd_to_omega(rot, cmd_upper)
            s = spin
        else:
            omega = _cmd_to_omega(rot, cmd_lower)
            s = -spin
        if omega <= 0.0:
            continue
        mu = min(lat / (omega * radius), MU_MAX)
        t = kt * omega * omega * (1.0 + kmu * mu * mu) - kax * omega * climb
        if t < 0.0:
            t = 0.0
        if i == 1:
            t *= eta
        thrust_total += t
        if lat > 0.0:
            dx = u / lat
            dy = v / lat
            m = khub * t * mu / math.sqrt(2.0)
            # flap-back about z x d plus advancing-blade roll about d
            mx += m * (-dy - s * dx)
            my += m * (dx - s * dy)
        mz += kq * omega * omega * s
    fz = -thrust_total
    out[0] = 0.0
    out[1] = 0.0
    out[2] = fz
    out[3] = rot[1] * fz + mx
    out[4] = -rot[0] * fz + my
    out[5] = mz


@numba.njit(cache=True)
def _drag(body, u, v, w, out):
    k = 0.5 * body[5] * body[4] * math.sqrt(u * u + v * v + w * w)
    fx, fy, fz = -k * u, -k * v, -k * w
    h = body[6]
    out[0] = fx
    out[1] = fy
    out[2] = fz
    # lever arm (0, 0, -h) x F
    out[3] = h * fy
    out[4] = -h * fx
    out[5] = 0.0


@numba.njit(cache=True)
def _wrench(body, rotors, state, cmds, wind, out):
    R = _rotation(state[6:10])
    rel = state[3:6] - wind
    ab = R.T @ rel
    p, q, r = state[10], state[11], state[12]
    tmp = np.empty(6)
    g_body = R[2, :] * (body[0] * body[7])  # R.T @ (0, 0, m g)
    out[0] = g_body[0]
    out[1] = g_body[1]
    out[2] = g_body[2]
    out[3] = 0.0
    out[4] = 0.0
    out[5] = 0.0
    for j in range(rotors.shape[0]):
        rot = rotors[j]
        rx, ry, rz = rot[0], rot[1], rot[2]
        # hub velocity = body velocity + omega x r
        hu = ab[0] + q * rz - r * ry
        hv = ab[1] + r * rx - p * rz
        hw = ab[2] + p * ry - q * rx
        _pair_wrench(rot, cmds[2 * j], cmds[2 * j + 1], hu, hv, hw, tmp)
        for k in range(6):
            out[k] += tmp[k]
    _drag(body, ab[0], ab[1], ab[2], tmp)
    for k in range(6):
        out[k] += tmp[k]


@numba.njit(cache=True)
def _derivative(body, rotors, state, cmds, wind, d):
    wr = np.empty(6)
    _wrench(body, rotors, state, cmds, wind, wr)
    R = _rotation(state[6:10])
    acc = R @ wr[0:3]
    m = body[0]
    d[0] = state[3]
    d[1] = state[4]
    d[2] = state[5]
    d[3] = acc[0] / m
    d[4] = acc[1] / m
    d[5] = acc[2] / m
    qw, qx, qy, qz = state[6], state[7], state[8], state[9]
    p, q, r = state[10], state[11], state[12]
    d[6] = 0.5 * (-qx * p - qy * q - qz * r)
    d[7] = 0.5 * (qw * p + qy * r - qz * q)
    d[8] = 0.5 * (qw * q - qx * r + qz * p)
    d[9] = 0.5 * (qw * r + qx * q - qy * p)
    ix, iy, iz = body[1], body[2], body[3]
    d[10] = (wr[3] - (iz - iy) * q * r) / ix
    d[11] = (wr[4] - (ix - iz) * r * p) / iy
    d[12] = (wr[5] - (iy - ix) * p * q) / iz


@numba.njit(cache=True)
def _rk4(body, rotors, state, cmds, wind, dt, out):
    k1 = np.empty(N_STATE)
    k2 = np.empty(N_STATE)
    k3 = np.empty(N_STATE)
    k4 = np.empty(N_STATE)
    _derivative(body, rotors, state, cmds, wind, k1)
    _derivative(body, rotors, state + 0.5 * dt * k1, cmds, wind, k2)
    _derivative(body, rotors, state + 0.5 * dt * k2, cmds, wind, k3)
    _derivative(body, rotors, state + dt * k3, cmds, wind, k4)
    for i in range(N_STATE):
        out[i] = state[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    n = math.sqrt(out[6] ** 2 + out[7] ** 2 + out[8] ** 2 + out[9] ** 2)
    for i in range(6, 10):
        out[i] /= n


# --------------------------------------------------------------------------
# public API

class IntegrationFault(FloatingPointError):
    """Raised when a dynamics step produces a non-finite state."""


def hover_command(params: DroneParams) -> float:
    """Pulse at which all 8 motors balance gravity in still air."""
    rp = params.rotor_pairs[0]
    omega = math.sqrt(params.mass * params.gravity / (4 * rp.k_thrust * (1 + rp.coax_efficiency)))
    return CMD_MIN + (omega - rp.omega_min) / (rp.omega_max - rp.omega_min) * (CMD_MAX - CMD_MIN)


def hover_state(position=(0.0, 0.0, 0.0), yaw=0.0) -> DroneState:
    return DroneState.from_euler(position=position, yaw=yaw)


def _vec3(v):
    return np.asarray(v, dtype=np.float64).reshape(3)


def _cmds8(cmds):
    c = np.asarray(cmds, dtype=np.float64)
    if c.shape != (8,):
        raise ValueError("expected 8 motor commands (upper, lower per pair)")
    return c


def rotor_pair_forces(pair: RotorPairParams, cmd_upper, cmd_lower, airspeed_body) -> ForceTorque:
    """Wrench of one coaxial pair; ``airspeed_body`` is the hub's velocity relative to air."""
    u, v, w = _vec3(airspeed_body)
    out = np.empty(6)
    _pair_wrench(pair.pack(), float(cmd_upper), float(cmd_lower), u, v, w, out)
    return ForceTorque.from_array(out)


def structural_drag(airspeed_body, params: DroneParams) -> ForceTorque:
    u, v, w = _vec3(airspeed_body)
    out = np.empty(6)
    _drag(params.pack_body(), u, v, w, out)
    return ForceTorque.from_array(out)


def total_wrench(state: DroneState, cmds, wind_inertial, params: DroneParams) -> ForceTorque:
    out = np.empty(6)
    _wrench(params.pack_body(), params.pack_rotors(), state.to_array(), _cmds8(cmds),
            _vec3(wind_inertial), out)
    return ForceTorque.from_array(out)


def step(state: DroneState, cmds, wind_inertial, dt, params: DroneParams) -> DroneState:
    """One RK4 step with commands and wind held over the interval."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    out = np.empty(N_STATE)
    _rk4(params.pack_body(), params.pack_rotors(), state.to_array(), _cmds8(cmds),
         _vec3(wind_inertial), float(dt), out)
    if not np.all(np.isfinite(out)):
        raise IntegrationFault("non-finite state after dynamics step")
    return DroneState.from_array(out)


def simulate_open_loop(state: DroneState, cmds, wind_inertial, dt, n_steps, params: DroneParams):
    """Repeated :func:`step` with fixed inputs; returns the final state."""
    body, rotors = params.pack_body(), params.pack_rotors()
    x = state.to_array()
    out = np.empty(N_STATE)
    c, w = _cmds8(cmds), _vec3(wind_inertial)
    for _ in range(int(n_steps)):
        _rk4(body, rotors, x, c, w, float(dt), out)
        x, out = out, x
    if not np.all(np.isfinite(x)):
        raise IntegrationFault("non-finite state after dynamics step")
    return DroneState.from_array(x)


def trajectory_euler(states):
    """Vectorised Z-Y-X Euler angles for an ``(n, 13)`` state array."""
    return np.array([_euler(s[6:10]) for s in np.atleast_2d(states)])
