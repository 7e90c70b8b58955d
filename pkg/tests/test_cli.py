import json

import numpy as np
import pytest

from lightray.cli import main
from lightray.lrtio import read_lrt

GRID = ["--T", "3", "--R", "3", "--nt", "17", "--nx", "17"]
CHART = ["--Z", "4", "--nz", "9", "--ndir", "8"]


@pytest.fixture
def sino(tmp_path):
    out = tmp_path / "s.lrt"
    assert main(["forward", "--phantom", "gaussian", *GRID, *CHART, "--out", str(out)]) == 0
    return out


def test_forward_writes_sinogram_with_provenance(sino):
    f = read_lrt(sino)
    assert f.kind == "sinogram" and f.dims == [9, 9, 8]
    assert f.meta["phantom"]["name"] == "gaussian"
    assert "argv" in f.meta and "seed" in f.meta


def test_adjoint_prints_pairing_residual(sino, tmp_path, capsys):
    assert main(["adjoint", "--in", str(sino), "--out", str(tmp_path / "a.lrt")]) == 0
    out = capsys.readouterr().out
    res = float(out.split("pairing residual")[1].split()[0])
    assert res <= 1e-12
    assert read_lrt(tmp_path / "a.lrt").kind == "field"


def test_threads_do_not_change_output(tmp_path, monkeypatch):
    # same relative paths in both runs, since argv is recorded in the header
    outs = []
    for th in ("1", "2"):
        d = tmp_path / th
        d.mkdir()
        monkeypatch.chdir(d)
        assert main(["forward", "--phantom", "bandlimited", "--threads", th, *GRID, *CHART,
                     "--out", "s.lrt"]) == 0
        assert main(["adjoint", "--in", "s.lrt", "--threads", th, "--out", "a.lrt"]) == 0
        outs.append(((d / "s.lrt").read_bytes(), (d / "a.lrt").read_bytes()))
    assert outs[0] == outs[1]


def test_normal_report_renders_figure(tmp_path):
    rep = tmp_path / "rep"
    assert main(["normal", "--phantom", "gaussian", *GRID, "--out", str(tmp_path / "n.lrt"),
                 "--report", str(rep)]) == 0
    assert (rep / "normal_slice.csv").exists()
    assert (rep / "normal_slice.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_cancel_demo(tmp_path, capsys):
    rep = tmp_path / "rep"
    assert main(["cancel-demo", "--nz", "3", "--ndir", "4", "--nsteps", "512",
                 "--report", str(rep)]) == 0
    out = capsys.readouterr().out
    ratio = float(out.split("sup|L f1| =")[1].split()[0])
    assert ratio < 1e-8
    assert (rep / "cancellation.csv").exists() and (rep / "cancellation.png").exists()


def test_conjugate_reports_pi(tmp_path, capsys):
    assert main(["conjugate", "--report", str(tmp_path)]) == 0
    first = capsys.readouterr().out.splitlines()[0]
    assert abs(float(first.split()[2]) - np.pi) < 1e-8


def test_malformed_file_exits_with_offset(sino, tmp_path, capsys):
    raw = sino.read_bytes()
    bad = tmp_path / "bad.lrt"
    bad.write_bytes(raw[:-3])
    assert main(["adjoint", "--in", str(bad), "--out", str(tmp_path / "x.lrt")]) == 1
    assert "byte offset" in capsys.readouterr().err


def test_bad_config_and_usage(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"grid": {"nt": 9}, "bogus": 1}))
    assert main(["forward", "--phantom", "gaussian", "--config", str(cfg),
                 "--out", str(tmp_path / "s.lrt")]) == 1
    assert "bogus" in capsys.readouterr().err
    assert main(["forward"]) == 1
    assert main(["adjoint", "--in", str(tmp_path / "missing.lrt")]) == 1


def test_config_drives_grid(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"grid": {"T": 2.0, "R": 2.0, "nt": 9, "nx": 11}}))
    out = tmp_path / "p.lrt"
    assert main(["phantom", "--phantom", "gaussian", "--config", str(cfg), "--out", str(out)]) == 0
    assert read_lrt(out).dims == [9, 11, 11]
