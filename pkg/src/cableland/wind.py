"""Stochastic lateral wind with a Von Karman (-5/3) spectral shape.

Profiles are synthesised as a sum of cosines at log-spaced frequencies with
seeded random phases.  Everything here is a pure function of the
:class:`WindSpec`, so a profile can be regenerated bit for bit anywhere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

KMH = 1.0 / 3.6
VON_KARMAN_EXPONENT = -5.0 / 3.0


@dataclass(frozen=True)
class WindSpec:
    mean_speed: float = 10.0 * KMH
    std_dev: float = 3.6 * KMH
    duration: float = 60.0
    sample_dt: float = 0.01
    freq_min: float = 0.02
    freq_max: float = 5.0
    n_bins: int = 64
    seed: int = 0

    def __post_init__(self):
        if not self.mean_speed >= 0:
            raise ValueError(f"mean_speed must be >= 0, got {self.mean_speed}")
        if not self.std_dev >= 0:
            raise ValueError(f"std_dev must be >= 0, got {self.std_dev}")
        if not self.duration > 0:
            raise ValueError(f"duration must be > 0, got {self.duration}")
        if not 0 < self.sample_dt < self.duration:
            raise ValueError("sample_dt must lie in (0, duration)")
        if not 0 < self.freq_min < self.freq_max:
            raise ValueError("need 0 < freq_min < freq_max")
        if int(self.n_bins) != self.n_bins or self.n_bins < 2:
            raise ValueError(f"n_bins must be an integer >= 2, got {self.n_bins}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True, eq=False)
class WindProfile:
    """Uniformly sampled wind speed along inertial +y (m/s)."""

    times: np.ndarray
    speeds: np.ndarray
    spec: WindSpec = field(repr=False)

    @property
    def samples(self):
        return list(zip(self.times.tolist(), self.speeds.tolist()))

    def __len__(self):
        return len(self.times)

    def __eq__(self, other):
        if not isinstance(other, WindProfile):
            return NotImplemented
        return (self.spec == other.spec
                and np.array_equal(self.times, other.times)
                and np.array_equal(self.speeds, other.speeds))


def spectrum_amplitude(f, v0):
    """Von Karman spectral shape ``v0 * f**(-5/3)``."""
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0) or np.any(~np.isfinite(f)):
        raise ValueError("spectrum_amplitude needs f > 0")
    out = v0 * f ** VON_KARMAN_EXPONENT
    return float(out) if out.ndim == 0 else out


def bin_layout(spec: WindSpec):
    """Centre frequencies and normalised cosine amplitudes for ``spec``.

    Bin edges sit at the geometric midpoints between neighbouring centres and
    are closed by ``freq_min``/``freq_max``.  Each amplitude is proportional to
    the square root of the spectral density integrated over its bin, then all
    are scaled so that ``sum(a**2) / 2 == std_dev**2``.
    """
    freqs = np.geomspace(spec.freq_min, spec.freq_max, int(spec.n_bins))
    edges = np.empty(len(freqs) + 1)
    edges[0] = spec.freq_min
    edges[-1] = spec.freq_max
    edges[1:-1] = np.sqrt(freqs[:-1] * freqs[1:])
    # closed-form integral of f**(-5/3) over each bin
    power = 1.5 * (edges[:-1] ** (-2.0 / 3.0) - edges[1:] ** (-2.0 / 3.0))
    amps = np.sqrt(power)
    total = np.sum(amps**2) / 2.0
    amps = amps * (spec.std_dev / math.sqrt(total))
    return freqs, amps


def generate_profile(spec: WindSpec) -> WindProfile:
    n = int(math.floor(spec.duration / spec.sample_dt + 1e-9)) + 1
    times = np.arange(n) * spec.sample_dt
    if spec.std_dev == 0:
        speeds = np.full(n, float(spec.mean_speed))
        return WindProfile(times, speeds, spec)

    freqs, amps = bin_layout(spec)
    rng = np.random.default_rng(int(spec.seed))
    phases = rng.uniform(0.0, 2.0 * np.pi, len(freqs))
    arg = 2.0 * np.pi * freqs[:, None] * times[None, :] + phases[:, None]
    fluct = np.sum(amps[:, None] * np.cos(arg), axis=0)
    return WindProfile(times, spec.mean_speed + fluct, spec)


def wind_at(profile: WindProfile, t: float) -> float:
    """Linearly interpolated wind speed at time ``t``."""
    if not 0.0 <= t <= profile.spec.duration + 1e-12:
        raise ValueError(f"t={t} outside [0, {profile.spec.duration}]")
    i = int(np.searchsorted(profile.times, t, side="right")) - 1
    i = min(max(i, 0), len(profile.times) - 1)
    t0 = profile.times[i]
    if t == t0 or i == len(profile.times) - 1:
        return float(profile.speeds[i])
    frac = (t - t0) / (profile.times[i + 1] - t0)
    return float(profile.speeds[i] + frac * (profile.speeds[i + 1] - profile.speeds[i]))


def write_profile_csv(profile: WindProfile, path) -> None:
    lines = ["time_s,wind_mps"]
    lines += [f"{t!r},{v!r}" for t, v in zip(profile.times.tolist(), profile.speeds.tolist())]
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")
