import json
import pathlib
import tempfile

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cableland.config import ConfigError, RunConfig, default_config_text, load_config, parse_config, serialize_config
from cableland.control import ControllerGains, Strategy
from cableland.envelope import Grid, SuccessCriteria, SuccessMap, SweepRow, TrialSpec, run_trial
from cableland.io import (read_map_csv, read_pgm, read_sweep_csv, render_heatmap, sidecar_path, write_delta_csv,
                          write_map_csv, write_phase_log_csv, write_pgm, write_sweep_csv, write_trajectory_csv)

G = Grid(-0.1, 0.1, 0.1, 1.5, 1.6, 0.1)


def _map(cells, n=10):
    return SuccessMap(G, n, 10 / 3.6, np.asarray(cells, dtype=float))


# map CSV ------------------------------------------------------------------

def test_map_csv_layout(tmp_path):
    path = write_map_csv(_map([[0.0, 0.5, 1.0], [0.1, 0.2, 0.3]]), tmp_path / "m.csv")
    raw = path.read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    assert raw.decode().splitlines() == [
        "z\\y,-0.100,0.000,0.100",
        "1.600,0.100,0.200,0.300",  # highest altitude first
        "1.500,0.000,0.500,1.000",
    ]
    meta = json.loads(sidecar_path(path).read_text())
    assert meta["n_trials"] == 10 and meta["wind_mean_kmh"] == pytest.approx(10.0)


lattice = st.lists(st.integers(0, 10), min_size=6, max_size=6).map(lambda v: np.array(v).reshape(2, 3) / 10)


@given(lattice)
def test_map_csv_round_trip(cells):
    with tempfile.TemporaryDirectory() as d:
        p = write_map_csv(_map(cells), pathlib.Path(d) / "m.csv")
        back = read_map_csv(p)
        assert np.array_equal(back.cells, cells)
        assert back.grid == G and back.n_trials == 10
        sidecar_path(p).unlink()
        bare = read_map_csv(p)
        assert np.array_equal(bare.cells, cells)
        assert bare.n_trials in {1, 2, 5, 10} and np.allclose(bare.ys, G.ys)


def test_map_csv_rejects_garbage(tmp_path):
    bad = tmp_path / "x.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_map_csv(bad)


def test_map_csv_unwritable(tmp_path):
    with pytest.raises(OSError):
        write_map_csv(_map(np.zeros((2, 3))), tmp_path / "missing" / "m.csv")


def test_delta_csv_signs(tmp_path):
    p = write_delta_csv(G.ys, G.zs, np.array([[-0.5, 0.0, 0.25], [0, 0, 0]]), tmp_path / "d.csv")
    assert p.read_text().splitlines()[2] == "1.500,-0.500,0.000,0.250"


# graymap ------------------------------------------------------------------

def test_heatmap_levels():
    assert np.all(render_heatmap(_map(np.ones((2, 3)))).pixels == 255)
    assert np.all(render_heatmap(_map(np.zeros((2, 3)))).pixels == 0)
    assert np.all(render_heatmap(_map(np.full((2, 3), 0.5), n=2)).pixels == 128)


@given(lattice)
def test_heatmap_linear_round_half_up(cells):
    img = render_heatmap(_map(cells))
    assert (img.width, img.height) == (3, 2)
    assert np.array_equal(img.pixels, np.floor(cells[::-1] * 255 + 0.5).astype(np.uint8))


def test_pgm_bytes(tmp_path):
    cells = np.array([[0.0, 0.5, 1.0], [0.1, 0.2, 0.3]])
    p = write_pgm(_map(cells), tmp_path / "m.pgm")
    raw = p.read_bytes()
    assert raw[:11] == b"P5\n3 2\n255\n"
    assert raw[11:] == bytes([26, 51, 77, 0, 128, 255])  # top row = 1.6 m
    img = read_pgm(p)
    assert np.array_equal(img.pixels, render_heatmap(_map(cells)).pixels)
    (tmp_path / "bad.pgm").write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(ValueError):
        read_pgm(tmp_path / "bad.pgm")


# tables -------------------------------------------------------------------

def test_sweep_csv(tmp_path):
    rows = [SweepRow(0.5, 0.1, 3.2, 4.25), SweepRow(0.1, 0.01, 3.4, float("inf"))]
    p = write_sweep_csv(rows, tmp_path / "s.csv")
    assert p.read_text().splitlines() == ["kp,kd,zone_area_m2,max_align_time_s,eligible",
                                          "0.5,0.1,3.2000,4.250,true", "0.1,0.01,3.4000,inf,false"]
    assert read_sweep_csv(p)[1] == (0.1, 0.01, 3.4, float("inf"), False)


def test_trajectory_and_phase_log(tmp_path):
    res = run_trial(TrialSpec(0.3, 1.8, wind_seed=2), record=True)
    p = write_trajectory_csv(res.trajectory, tmp_path / "t.csv")
    lines = p.read_text().splitlines()
    assert lines[0] == "t,x,y,z,vx,vy,vz,roll,pitch,yaw,p,q,r"
    assert len(lines) == len(res.trajectory) + 1
    assert float(lines[1].split(",")[2]) == res.trajectory["y"][0]
    log = write_phase_log_csv(res.phase_log, tmp_path / "p.csv").read_text().splitlines()
    assert log[0] == "t,phase_from,phase_to,reason"
    assert log[1].split(",")[1:] == ["READY_TO_ALIGN", "ALIGNING", "ENGAGE"]


# config -------------------------------------------------------------------

def test_empty_config_is_default():
    cfg = parse_config("")
    assert cfg == RunConfig()
    assert cfg.drone.mass == 20.0
    assert cfg.gains == ControllerGains(0.5, 0.1)
    assert cfg.criteria == SuccessCriteria()
    assert cfg.strategy.strategy is Strategy.TSLS
    assert cfg.grid == Grid()


def test_shipped_defaults_file():
    assert parse_config(default_config_text()) == RunConfig()


def test_config_round_trip(tmp_path):
    doc = """
schema_version = 1
n_trials = 4
master_seed = 17
[drone]
mass = 22.5
[gains]
kp_y = 1.0
kd_y = 0.5
[strategy]
strategy = "dls"
alignment_box = { y = 0.05, z = 0.1, psi = 0.04 }
[wind]
means_kmh = [10]
"""
    cfg = parse_config(doc)
    assert cfg.drone.mass == 22.5 and cfg.gains.kd_y == 0.5 and cfg.strategy.strategy is Strategy.DLS
    assert parse_config(serialize_config(cfg)) == cfg
    p = tmp_path / "c.toml"
    p.write_text(serialize_config(cfg))
    assert load_config(p) == cfg


@pytest.mark.parametrize("doc,key", [
    ("[drone]\nmass = -5", "drone.mass"),
    ("[drone]\nmas = 5", "drone.mas"),
    ("bogus = 1", "bogus"),
    ("[gains]\nkp_y = \"high\"", "gains.kp_y"),
    ("[gains]\nkd_y = -1.0", "gains.kd_y"),
    ("n_trials = 0", "n_trials"),
    ("schema_version = 2", "schema_version"),
    ("[strategy]\nstrategy = \"hover\"", "strategy.strategy"),
    ("[criteria]\nphi_tol = 0.0", "criteria"),
])
def test_config_errors_name_the_key(doc, key):
    with pytest.raises(ConfigError) as exc:
        parse_config(doc)
    assert exc.value.key.startswith(key)
    assert key in str(exc.value)


def test_malformed_config_reports_line():
    with pytest.raises(ConfigError) as exc:
        parse_config("n_trials = 3\n[drone\nmass = 1")
    assert "line 2" in str(exc.value)
