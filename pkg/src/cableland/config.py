"""Run configuration: TOML in, validated dataclasses out (and back).

Every key is optional; missing keys take the defaults shipped in
``defaults.toml``.  Unknown keys and type mismatches raise
:class:`ConfigError` naming the dotted key.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import tomli
import tomli_w

from .control import Box, CommandLimits, ControllerGains, LLFCParams, Strategy, StrategyConfig
from .dynamics import DroneParams, LegsZone, RotorPairParams, default_rotor_pairs
from .envelope import Cable, Grid, SimSettings, Simulator, SuccessCriteria

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    def __init__(self, key, msg):
        self.key = key
        super().__init__(f"{key}: {msg}" if key else msg)


@dataclass(frozen=True)
class RunConfig:
    drone: DroneParams = field(default_factory=DroneParams.default)
    gains: ControllerGains = field(default_factory=ControllerGains)
    criteria: SuccessCriteria = field(default_factory=SuccessCriteria)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    llfc: LLFCParams = field(default_factory=LLFCParams)
    sim: SimSettings = field(default_factory=SimSettings)
    grid: Grid = field(default_factory=Grid)
    wind_means_kmh: tuple = (5.0, 10.0, 15.0, 20.0)
    wind_std_kmh: float = 3.6
    n_trials: int = 10
    master_seed: int = 0
    workers: int = 0
    output_dir: str = "out"

    def __post_init__(self):
        if not self.n_trials >= 1:
            raise ConfigError("n_trials", "must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed", "must be an unsigned 64-bit integer")
        if self.workers < 0:
            raise ConfigError("workers", "must be >= 0 (0 = auto)")
        if not self.wind_means_kmh or min(self.wind_means_kmh) < 0:
            raise ConfigError("wind.means_kmh", "needs at least one non-negative mean")
        if self.wind_std_kmh < 0:
            raise ConfigError("wind.std_kmh", "must be >= 0")

    def simulator(self) -> Simulator:
        return Simulator(drone=self.drone, llfc=self.llfc, criteria=self.criteria,
                         cable=Cable(), settings=self.sim)


# --------------------------------------------------------------------------
# generic field checking

def _number(key, v, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(key, f"expected a number, got {type(v).__name__}")
    if integer:
        if isinstance(v, float):
            raise ConfigError(key, "expected an integer")
        return int(v)
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(key, "must be finite")
    return v


def _vector(key, v, n):
    if not isinstance(v, list) or len(v) != n:
        raise ConfigError(key, f"expected a list of {n} numbers")
    return tuple(_number(f"{key}[{i}]", x) for i, x in enumerate(v))


def _check_keys(prefix, table, allowed):
    if not isinstance(table, dict):
        raise ConfigError(prefix, "expected a table")
    for k in table:
        if k not in allowed:
            raise ConfigError(f"{prefix}.{k}" if prefix else k, "unknown key")


def _scalars(prefix, table, cls, skip=(), ints=()):
    """Validate the scalar float fields of ``cls`` found in ``table``."""
    out = {}
    for f in dataclasses.fields(cls):
        if f.name in skip or f.name not in table:
            continue
        out[f.name] = _number(f"{prefix}.{f.name}", table[f.name], integer=f.name in ints)
    return out


def _build(prefix, cls, kwargs):
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        # point at the single offending key when the message names a field
        msg = str(exc)
        for name in kwargs:
            if msg.startswith(name) or f" {name} " in f" {msg} ":
                raise ConfigError(f"{prefix}.{name}", msg) from None
        raise ConfigError(prefix, msg) from None


# --------------------------------------------------------------------------
# sections

_ROTOR_KEYS = {"radius", "k_thrust", "coax_efficiency", "k_mu", "k_axial", "k_hub",
               "k_torque", "omega_min", "omega_max"}
_DRONE_KEYS = {"mass", "inertia_diag", "flat_plate_area", "air_density", "cd_offset",
               "gravity", "arm", "rotor", "legs_zone"}


def _parse_drone(t):
    _check_keys("drone", t, _DRONE_KEYS)
    base = DroneParams.default()
    kw = _scalars("drone", t, DroneParams, skip=("inertia_diag", "rotor_pairs", "legs_zone"))
    if "mass" in kw and not kw["mass"] > 0:
        raise ConfigError("drone.mass", f"must be positive, got {kw['mass']}")
    if "inertia_diag" in t:
        kw["inertia_diag"] = _vector("drone.inertia_diag", t["inertia_diag"], 3)
    arm = _number("drone.arm", t["arm"]) if "arm" in t else 0.4
    if not arm > 0:
        raise ConfigError("drone.arm", "must be positive")
    rotor = t.get("rotor", {})
    _check_keys("drone.rotor", rotor, _ROTOR_KEYS)
    rkw = _scalars("drone.rotor", rotor, RotorPairParams, skip=("position", "spin_sign"))
    mass = kw.get("mass", base.mass)
    gravity = kw.get("gravity", base.gravity)
    try:
        pairs = default_rotor_pairs(arm=arm, mass=mass, g=gravity, **rkw)
    except ValueError as exc:
        raise ConfigError("drone.rotor", str(exc)) from None
    legs = t.get("legs_zone", {})
    _check_keys("drone.legs_zone", legs, {f.name for f in dataclasses.fields(LegsZone)})
    lz = _build("drone.legs_zone", LegsZone, _scalars("drone.legs_zone", legs, LegsZone))
    return _build("drone", DroneParams, {**kw, "rotor_pairs": pairs, "legs_zone": lz})


def _parse_box(key, t, default: Box):
    _check_keys(key, t, {"y", "z", "psi"})
    return _build(key, Box, {**dataclasses.asdict(default), **_scalars(key, t, Box)})


def _parse_strategy(t):
    keys = {"strategy", "intermediate_target", "hold_time", "descent_speed_cmd",
            "alignment_box", "abort_box", "limits"}
    _check_keys("strategy", t, keys)
    d = StrategyConfig()
    kw = _scalars("strategy", t, StrategyConfig,
                  skip=("strategy", "intermediate_target", "alignment_box", "abort_box", "limits"))
    if "strategy" in t:
        try:
            kw["strategy"] = Strategy(str(t["strategy"]).lower())
        except ValueError:
            raise ConfigError("strategy.strategy", "expected 'dls' or 'tsls'") from None
    if "intermediate_target" in t:
        kw["intermediate_target"] = _vector("strategy.intermediate_target", t["intermediate_target"], 2)
    kw["alignment_box"] = _parse_box("strategy.alignment_box", t.get("alignment_box", {}), d.alignment_box)
    kw["abort_box"] = _parse_box("strategy.abort_box", t.get("abort_box", {}), d.abort_box)
    lim = t.get("limits", {})
    _check_keys("strategy.limits", lim, {"lateral", "vertical", "yaw_rate"})
    kw["limits"] = _build("strategy.limits", CommandLimits, _scalars("strategy.limits", lim, CommandLimits))
    return _build("strategy", StrategyConfig, kw)


def _parse_flat(name, t, cls, vectors=None, ints=()):
    vectors = vectors or {}
    _check_keys(name, t, {f.name for f in dataclasses.fields(cls)})
    kw = _scalars(name, t, cls, skip=tuple(vectors), ints=ints)
    for k, n in vectors.items():
        if k in t:
            kw[k] = _vector(f"{name}.{k}", t[k], n)
    return _build(name, cls, kw)


def parse_config(text: str) -> RunConfig:
    """Parse a TOML document into a fully validated :class:`RunConfig`."""
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError("", f"malformed config: {exc}") from None
    return config_from_dict(doc)


def config_from_dict(doc: dict) -> RunConfig:
    top = {"schema_version", "n_trials", "master_seed", "workers", "output_dir", "drone",
           "gains", "criteria", "strategy", "llfc", "sim", "grid", "wind"}
    _check_keys("", doc, top)
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version!r} (expected {SCHEMA_VERSION})")
    kw = {}
    for k in ("n_trials", "master_seed", "workers"):
        if k in doc:
            kw[k] = _number(k, doc[k], integer=True)
    if "output_dir" in doc:
        if not isinstance(doc["output_dir"], str):
            raise ConfigError("output_dir", "expected a string")
        kw["output_dir"] = doc["output_dir"]
    kw["drone"] = _parse_drone(doc.get("drone", {}))
    kw["gains"] = _parse_flat("gains", doc.get("gains", {}), ControllerGains)
    kw["criteria"] = _parse_flat("criteria", doc.get("criteria", {}), SuccessCriteria,
                                 vectors={"v_dir_window": 2})
    kw["strategy"] = _parse_strategy(doc.get("strategy", {}))
    kw["llfc"] = _parse_flat("llfc", doc.get("llfc", {}), LLFCParams)
    kw["sim"] = _parse_flat("sim", doc.get("sim", {}), SimSettings)
    kw["grid"] = _parse_flat("grid", doc.get("grid", {}), Grid)
    wind = doc.get("wind", {})
    _check_keys("wind", wind, {"means_kmh", "std_kmh"})
    if "means_kmh" in wind:
        means = wind["means_kmh"]
        if not isinstance(means, list) or not means:
            raise ConfigError("wind.means_kmh", "expected a non-empty list of numbers")
        kw["wind_means_kmh"] = tuple(_number(f"wind.means_kmh[{i}]", v) for i, v in enumerate(means))
    if "std_kmh" in wind:
        kw["wind_std_kmh"] = _number("wind.std_kmh", wind["std_kmh"])
    return RunConfig(**kw)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


def default_config_text() -> str:
    return resources.files("cableland").joinpath("defaults.toml").read_text()


# --------------------------------------------------------------------------
# serialisation

def _flat(obj, skip=()):
    out = {}
    for f in dataclasses.fields(obj):
        if f.name in skip:
            continue
        v = getattr(obj, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


def config_to_dict(cfg: RunConfig) -> dict:
    d = cfg.drone
    rp = d.rotor_pairs[0]
    arm = abs(rp.position[0])
    expected = default_rotor_pairs(arm=arm, mass=d.mass, g=d.gravity,
                                   **_flat(rp, skip=("position", "spin_sign")))
    if tuple(d.rotor_pairs) != expected:
        raise ConfigError("drone.rotor", "only the symmetric four-pair layout can be serialised")
    s = cfg.strategy
    return {
        "schema_version": SCHEMA_VERSION,
        "n_trials": cfg.n_trials,
        "master_seed": cfg.master_seed,
        "workers": cfg.workers,
        "output_dir": cfg.output_dir,
        "drone": {**_flat(d, skip=("rotor_pairs", "legs_zone")), "arm": arm,
                  "rotor": _flat(rp, skip=("position", "spin_sign")),
                  "legs_zone": _flat(d.legs_zone)},
        "gains": _flat(cfg.gains),
        "criteria": _flat(cfg.criteria),
        "strategy": {"strategy": s.strategy.value, "intermediate_target": list(s.intermediate_target),
                     "hold_time": s.hold_time, "descent_speed_cmd": s.descent_speed_cmd,
                     "alignment_box": _flat(s.alignment_box), "abort_box": _flat(s.abort_box),
                     "limits": _flat(s.limits)},
        "llfc": _flat(cfg.llfc),
        "sim": _flat(cfg.sim),
        "grid": _flat(cfg.grid),
        "wind": {"means_kmh": list(cfg.wind_means_kmh), "std_kmh": cfg.wind_std_kmh},
    }


def serialize_config(cfg: RunConfig) -> str:
    return tomli_w.dumps(config_to_dict(cfg))


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
