import csv
import json

import numpy as np
import pytest

from raman_speckle import fstk
from raman_speckle.cli import main

SMALL = """\
gas:
  name: Kr-1torr
sim:
  grid_n: 48
  pitch_urad: 100
  n_modes: 10
  w0_mrad: 0.6
  n_frames: 1000
  n_background: 20
  seed: 9
retrieval:
  read_blur_mrad: 0
"""


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(SMALL)
    return p


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_simulate_writes_stacks(cfg_path, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(cfg_path), "--out", str(out), "--frames", "300"]) == 0
    text = capsys.readouterr().out
    assert "config_hash" in text and "total counts" in text
    s = fstk.read_stack(out / "stokes.fstk")
    a = fstk.read_stack(out / "antistokes.fstk")
    bg = fstk.read_stack(out / "background.fstk")
    assert (len(s), len(a), len(bg)) == (300, 300, 20)
    # header arithmetic: prefix + header + 4 bytes per sample
    h = fstk.read_header(out / "stokes.fstk")
    size = (out / "stokes.fstk").stat().st_size
    hlen = len(json.dumps(h, sort_keys=True, separators=(",", ":")).encode())
    assert size == 12 + hlen + 4 * 300 * 48 * 48
    assert a.region_center == (13.0, 0.0)
    # mean Stokes peak near the axis
    m = s.frames.mean(0)
    iy, ix = np.unravel_index(np.argmax(m), m.shape)
    assert abs(ix - s.center[0]) <= 1.5 and abs(iy - s.center[1]) <= 1.5


def test_simulate_deterministic_and_seed_override(cfg_path, tmp_path):
    outs = []
    for name, extra in (("a", []), ("b", ["--threads", "2"]), ("c", ["--seed", "10"])):
        out = tmp_path / name
        assert main(["simulate", "--config", str(cfg_path), "--out", str(out), "--frames", "150", *extra]) == 0
        outs.append(out)
    for f in ("stokes.fstk", "antistokes.fstk", "background.fstk"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    a = fstk.read_stack(outs[0] / "stokes.fstk").frames
    c = fstk.read_stack(outs[2] / "stokes.fstk").frames
    assert not np.array_equal(a, c)
    # different seeds agree on the mean image within sampling error
    ma, mc = a.mean(0), c.mean(0)
    assert abs(ma.sum() - mc.sum()) < 0.3 * ma.sum()


def test_correlations_command(cfg_path, tmp_path, capsys):
    run = tmp_path / "run"
    assert main(["simulate", "--config", str(cfg_path), "--out", str(run)]) == 0
    out1, out2 = tmp_path / "c1", tmp_path / "c2"
    for out in (out1, out2):
        rc = main(["correlations", "--stokes", str(run / "stokes.fstk"), "--antistokes", str(run / "antistokes.fstk"),
                   "--background", str(run / "background.fstk"), "--ref", "0.45,-0.35", "--out", str(out)])
        assert rc == 0
    for f in ("c_ss.csv", "c_as.csv", "c_aa.csv", "correlations_summary.csv"):
        assert (out1 / f).read_bytes() == (out2 / f).read_bytes()
    summary = {r[0]: r[1:] for r in _rows(out1 / "correlations_summary.csv")[1:]}
    # within one 0.1 mrad pixel of the mirrored reference (a pixel center on this grid)
    assert float(summary["conjugate_peak_x"][0]) == pytest.approx(-0.45, abs=0.1)
    assert float(summary["conjugate_peak_y"][0]) == pytest.approx(0.35, abs=0.1)
    assert summary["stokes_N"][2] == "1"
    grid = _rows(out1 / "c_as.csv")
    assert len(grid) == 49 and len(grid[0]) == 49
    # at least 9 significant digits on generic values
    assert len(grid[5][5].replace("-", "").replace(".", "").split("e")[0].lstrip("0")) >= 9


def test_correlations_rejects_small_stacks(cfg_path, tmp_path, capsys):
    run = tmp_path / "run"
    main(["simulate", "--config", str(cfg_path), "--out", str(run), "--frames", "200"])
    rc = main(["correlations", "--stokes", str(run / "stokes.fstk"), "--antistokes", str(run / "antistokes.fstk"),
               "--ref", "0,0", "--out", str(tmp_path / "c")])
    assert rc == 2
    rc = main(["correlations", "--stokes", str(run / "stokes.fstk"), "--antistokes", str(run / "antistokes.fstk"),
               "--ref", "40,0", "--out", str(tmp_path / "c"), "--min-frames", "100"])
    assert rc == 2
    assert "outside the grid" in capsys.readouterr().err


def test_decay_sweep_csv(cfg_path, tmp_path):
    outs = [tmp_path / "d1", tmp_path / "d2"]
    for out in outs:
        rc = main(["decay-sweep", "--config", str(cfg_path), "--out", str(out), "--frames", "100",
                   "--t-store", "0,1,2,3,4", "--angles", "0.3,0.6,0.9,1.2"])
        assert rc == 0
    assert (outs[0] / "decay_sweep.csv").read_bytes() == (outs[1] / "decay_sweep.csv").read_bytes()
    rows = _rows(outs[0] / "decay_sweep.csv")
    assert rows[0] == ["theta_mrad", "gamma_per_us", "sigma_gamma_per_us", "converged"]
    assert len(rows) == 6
    assert rows[-1][0] == "D_cm2_s"
    assert _rows(outs[0] / "decay_intensity.csv")[0][0] == "t_store_us"


def test_growth_sweep_csv(cfg_path, tmp_path):
    out = tmp_path / "g"
    rc = main(["growth-sweep", "--config", str(cfg_path), "--out", str(out), "--frames", "100",
               "--angles", "0,0.3,0.6"])
    assert rc == 0
    rows = _rows(out / "growth_sweep.csv")
    assert rows[0][-1] == "kappa_plane_wave_per_us"
    assert len(rows) == 4


def test_strict_exit_code(tmp_path):
    p = tmp_path / "nodecay.yaml"
    p.write_text(SMALL.replace("  name: Kr-1torr\n", "  name: Kr-1torr\n  diffusion_cm2_s: 0\n"))
    args = ["decay-sweep", "--config", str(p), "--out", str(tmp_path / "o"), "--frames", "50",
            "--t-store", "0,1,2", "--angles", "0.3,0.6,0.9"]
    assert main(args) == 0
    assert main(args + ["--strict"]) == 4


def test_config_error_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("gas:\n  name: Kr-1torr\nsim:\n  sed: 3\n")
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "sim.sed" in err and "line 4" in err


def test_io_error_exit_codes(cfg_path, tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path / "o")]) == 3
    junk = tmp_path / "junk.fstk"
    junk.write_bytes(b"FSTK\x01\x00")
    assert main(["info", str(junk)]) == 3
    assert main(["correlations", "--stokes", str(junk), "--antistokes", str(junk), "--ref", "0,0",
                 "--out", str(tmp_path / "c")]) == 3


def test_info(cfg_path, tmp_path, capsys):
    out = tmp_path / "run"
    main(["simulate", "--config", str(cfg_path), "--out", str(out), "--frames", "5"])
    capsys.readouterr()
    assert main(["info", str(out / "stokes.fstk"), str(out / "background.fstk")]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    heads = [json.loads(x) for x in lines]
    assert heads[0]["label"] == "stokes" and heads[1]["n_frames"] == 20
    assert heads[0]["seed"] == 9


def test_usage_error():
    with pytest.raises(SystemExit) as ei:
        main(["correlations", "--ref", "1"])
    assert ei.value.code == 2
