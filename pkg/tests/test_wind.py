import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cableland.wind import (KMH, WindProfile, WindSpec, bin_layout, generate_profile, spectrum_amplitude,
                            wind_at, write_profile_csv)

from oracles import banded_psd_slope


def test_spectrum_examples():
    assert spectrum_amplitude(1.0, 2.78) == 2.78
    # 8**(5/3) = 32 exactly
    assert spectrum_amplitude(8.0, 32.0) == pytest.approx(1.0, rel=1e-14)
    assert spectrum_amplitude(2.0, 1.0) / spectrum_amplitude(1.0, 1.0) == pytest.approx(2 ** (-5 / 3), rel=1e-14)
    assert 2 ** (-5 / 3) == pytest.approx(0.31498, abs=1e-5)


@pytest.mark.parametrize("f", [0.0, -1.0])
def test_spectrum_rejects_nonpositive(f):
    with pytest.raises(ValueError):
        spectrum_amplitude(f, 1.0)


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.floats(1e-3, 1e2))
def test_spectrum_ratio_law(f1, f2, v0):
    r = spectrum_amplitude(f2, v0) / spectrum_amplitude(f1, v0)
    assert r == pytest.approx((f2 / f1) ** (-5 / 3), rel=1e-12)


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e2))
def test_spectrum_linear_in_v0(f, v0):
    assert spectrum_amplitude(f, 2 * v0) == pytest.approx(2 * spectrum_amplitude(f, v0), rel=1e-15)


@pytest.mark.parametrize("kw", [
    dict(mean_speed=-1), dict(std_dev=-0.1), dict(duration=0), dict(sample_dt=0),
    dict(sample_dt=61), dict(freq_min=0), dict(freq_min=5, freq_max=5), dict(n_bins=1),
    dict(seed=-1), dict(seed=2**64),
])
def test_windspec_validation(kw):
    with pytest.raises(ValueError):
        WindSpec(**kw)


def test_zero_std_is_constant():
    p = generate_profile(WindSpec(mean_speed=5.0, std_dev=0.0, duration=2.0))
    assert np.all(p.speeds == 5.0)
    assert wind_at(p, 0.737) == 5.0


def test_profile_is_deterministic_and_seeded():
    a = generate_profile(WindSpec(seed=11))
    b = generate_profile(WindSpec(seed=11))
    c = generate_profile(WindSpec(seed=12))
    assert a == b
    assert np.array_equal(a.speeds, b.speeds)
    assert not np.array_equal(a.speeds, c.speeds)


def test_times_uniform():
    p = generate_profile(WindSpec(duration=3.0, sample_dt=0.01))
    assert len(p) == 301
    assert np.allclose(np.diff(p.times), 0.01, atol=1e-12)
    assert p.times[0] == 0.0 and p.times[-1] == pytest.approx(3.0)
    assert p.samples[5] == (p.times[5], p.speeds[5])


def test_bin_amplitudes_normalised():
    spec = WindSpec(std_dev=1.3)
    f, a = bin_layout(spec)
    assert len(f) == spec.n_bins
    assert f[0] == pytest.approx(spec.freq_min) and f[-1] == pytest.approx(spec.freq_max)
    assert np.sum(a**2) / 2 == pytest.approx(1.3**2, rel=1e-12)
    # amplitudes follow sqrt of the integrated -5/3 density: closed-form band integrals
    edges = np.concatenate([[spec.freq_min], np.sqrt(f[:-1] * f[1:]), [spec.freq_max]])
    integ = 1.5 * (edges[:-1] ** (-2 / 3) - edges[1:] ** (-2 / 3))
    ref = np.sqrt(integ)
    ref *= 1.3 / math.sqrt(np.sum(ref**2) / 2)
    assert np.allclose(a, ref, rtol=1e-5)


def test_cosine_sum_formula():
    spec = WindSpec(duration=1.0, seed=3)
    p = generate_profile(spec)
    f, a = bin_layout(spec)
    ph = np.random.default_rng(3).uniform(0, 2 * np.pi, len(f))
    t = p.times[17]
    expect = spec.mean_speed + sum(ai * math.cos(2 * math.pi * fi * t + pi) for ai, fi, pi in zip(a, f, ph))
    assert p.speeds[17] == pytest.approx(expect, abs=1e-12)


def test_moments_over_seeds():
    spec = dict(mean_speed=10 * KMH, std_dev=3.6 * KMH, duration=60.0)
    sp = np.array([generate_profile(WindSpec(seed=s, **spec)).speeds for s in range(100)])
    assert abs(sp.mean() / (10 * KMH) - 1) < 0.05
    assert abs(sp.std(axis=1).mean() / (3.6 * KMH) - 1) < 0.15


def test_periodogram_slope_600s():
    spec = WindSpec(duration=600.0, seed=5)
    p = generate_profile(spec)
    slope = banded_psd_slope(p.speeds, spec.sample_dt, spec.freq_min * 2, spec.freq_max / 2)
    assert -2.0 <= slope <= -1.33
    assert slope == pytest.approx(-5 / 3, abs=0.1)


def test_wind_at_interpolation():
    spec = WindSpec(duration=0.02, sample_dt=0.01, std_dev=0.0, mean_speed=1.0)
    p = WindProfile(np.array([0.0, 0.01, 0.02]), np.array([2.0, 4.0, 1.0]), spec)
    assert wind_at(p, 0.01) == 4.0
    assert wind_at(p, 0.005) == pytest.approx(3.0)
    assert wind_at(p, 0.02) == 1.0
    for bad in (-1e-3, 0.03):
        with pytest.raises(ValueError):
            wind_at(p, bad)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 2.0))
def test_wind_at_exact_on_nodes(t):
    p = generate_profile(WindSpec(duration=2.0, seed=1))
    i = int(round(t / 0.01))
    assert wind_at(p, p.times[i]) == p.speeds[i]
    lo = min(p.speeds[max(0, int(t / 0.01))], p.speeds[min(len(p) - 1, int(t / 0.01) + 1)])
    hi = max(p.speeds[max(0, int(t / 0.01))], p.speeds[min(len(p) - 1, int(t / 0.01) + 1)])
    assert lo - 1e-12 <= wind_at(p, t) <= hi + 1e-12


def test_csv_export(tmp_path):
    p = generate_profile(WindSpec(duration=0.05))
    path = tmp_path / "w.csv"
    write_profile_csv(p, path)
    raw = path.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "time_s,wind_mps"
    assert len(lines) == len(p) + 1
    vals = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    assert np.array_equal(vals[:, 1], p.speeds)
