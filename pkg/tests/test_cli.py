import json
import os
import subprocess
import sys

import pytest
import yaml

from brokenpde import __version__
from brokenpde.cli import run
from brokenpde.grid import read_csv

CFG = {
    "grid": {"bounds": [[-1, 1], [-1, 1]], "n": 33},
    "coefficients": {"s": 0, "a_plus": "2", "a_minus": "1"},
    "boundary": "x",
}


def _write(tmp_path, data, name="c.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_solve(tmp_path):
    out = tmp_path / "s"
    assert run(["solve", "--config", _write(tmp_path, CFG), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["converged"] is True
    assert read_csv(out / "u.csv").grid.n == 33
    man = _manifest(out)
    assert man["version"] == __version__ and man["wall_time"] > 0 and len(man["config_hash"]) == 64


def test_solve_is_deterministic(tmp_path):
    cfg = _write(tmp_path, CFG)
    run(["solve", "--config", cfg, "--out", str(tmp_path / "a")])
    run(["solve", "--config", cfg, "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "u.csv").read_bytes() == (tmp_path / "b" / "u.csv").read_bytes()


def test_config_error_exit_code(tmp_path, capsys):
    bad = dict(CFG, coefficients={"s": 0, "a_plus": "2", "a_minus": "1", "gamma": 3})
    assert run(["solve", "--config", _write(tmp_path, bad), "--out", str(tmp_path / "o")]) == 2
    assert "coefficients.gamma" in capsys.readouterr().err


def test_forced_non_convergence(tmp_path):
    cfg = dict(CFG, boundary="x^2-y^2", solver={"max_picard": 1})
    out = tmp_path / "o"
    assert run(["solve", "--config", _write(tmp_path, cfg), "--out", str(out)]) == 3
    assert json.loads((out / "report.json").read_text())["converged"] is False
    assert _manifest(out)["exit_code"] == 3


@pytest.mark.parametrize("kind, files", [("freeze", {"v.csv"}), ("w", {"v.csv", "bvec.csv", "c.csv"})])
def test_transform(tmp_path, kind, files):
    out = tmp_path / kind
    assert run(["transform", "--config", _write(tmp_path, CFG), "--kind", kind, "--z=0.1,0", "--out", str(out)]) == 0
    assert files <= {p.name for p in out.iterdir()}


def test_transform_phi_s(tmp_path):
    cfg = dict(CFG, coefficients={"s": 1, "a": "1", "b": "1"})
    assert run(["transform", "--config", _write(tmp_path, cfg), "--kind", "phi_s", "--out", str(tmp_path / "p")]) == 0
    assert run(["transform", "--config", _write(tmp_path, CFG, "s0.yaml"), "--kind", "phi_s",
                "--out", str(tmp_path / "q")]) == 2


def test_pipeline(tmp_path):
    cfg = _write(tmp_path, dict(CFG, grid={"bounds": [[-1, 1], [-1, 1]], "n": 65}))
    s, t, n = tmp_path / "s", tmp_path / "t", tmp_path / "n"
    assert run(["solve", "--config", cfg, "--out", str(s)]) == 0
    assert run(["transform", "--config", cfg, "--kind", "w", "--in", str(s / "u.csv"), "--out", str(t)]) == 0
    assert run(["nodal", "--config", cfg, "--in", str(s / "u.csv"), "--out", str(n)]) == 0
    assert (n / "segments.csv").read_text().startswith("x1,y1,x2,y2\n")
    assert (n / "normals.csv").read_text().startswith("x,y,nx,ny,delta\n")
    measures = json.loads((n / "measures.json").read_text())
    assert measures["nodal_length"] > 0.8 and measures["positive_measure"] > measures["negative_measure"]

    o = tmp_path / "o"
    assert run(["order", "--in", str(s / "u.csv"), "--out", str(o)]) == 0
    rows = (o / "orders.csv").read_text().splitlines()
    assert rows[0] == "x,y,d_hat,gap,label" and len(rows) > 5

    f = tmp_path / "f"
    args = ["frequency", "--in", str(t / "v.csv"), "--u", str(s / "u.csv"), "--bvec", str(t / "bvec.csv"),
            "--c", str(t / "c.csv"), "--z=-0.2,0", "--rmin", "0.1", "--rmax", "0.4", "--steps", "4", "--out", str(f)]
    assert run(args) == 0
    lines = (f / "frequency.csv").read_text().splitlines()
    assert lines[0] == "r,H,I,N,doubling" and len(lines) == 5
    assert json.loads((f / "flags.json").read_text()) == {}


def test_order_radius_floor_is_config_error(tmp_path):
    cfg = _write(tmp_path, CFG)
    run(["solve", "--config", cfg, "--out", str(tmp_path / "s")])
    code = run(["order", "--in", str(tmp_path / "s" / "u.csv"), "--z=0,0", "--r-max", "0.1", "--levels", "5",
                "--out", str(tmp_path / "o")])
    assert code == 2


@pytest.mark.parametrize(
    "grid, key",
    [({"bounds": [[-1, 1]], "n": 65}, "interface_offset"), ({"bounds": [[-1, 1], [-1, 1]], "n": 33}, "sup_error")],
)
def test_oracle_compare(tmp_path, grid, key):
    out = tmp_path / "e"
    assert run(["oracle-compare", "--config", _write(tmp_path, dict(CFG, grid=grid)), "--out", str(out)]) == 0
    err = json.loads((out / "error.json").read_text())
    assert key in err and err["sup_error"] <= 3 * err["h"] and err["l2_error"] <= err["sup_error"] * 2


def test_seventeen_digits(tmp_path):
    out = tmp_path / "s"
    run(["solve", "--config", _write(tmp_path, CFG), "--out", str(out)])
    values = [line.split(",")[2] for line in (out / "u.csv").read_text().splitlines()[1:]]
    assert max(len(v.lstrip("-").replace(".", "").lstrip("0")) for v in values) == 17


def test_verify_constant_coeff(tmp_path):
    out = tmp_path / "v"
    assert run(["verify", "--suite", "constant-coeff", "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert [c["id"] for c in report["criteria"]] == ["AC-1", "AC-2", "AC-3"]
    assert all(c["passed"] for c in report["criteria"])


def test_module_entry_point_and_logging(tmp_path):
    env = dict(os.environ, BROKENPDE_LOG="info")
    res = subprocess.run([sys.executable, "-m", "brokenpde", "--version"], capture_output=True, text=True, env=env)
    assert res.returncode == 0 and __version__ in res.stdout
    cfg = _write(tmp_path, CFG)
    res = subprocess.run([sys.executable, "-m", "brokenpde", "verify", "--suite", "transforms", "--out",
                          str(tmp_path / "v")], capture_output=True, text=True, env=env)
    assert res.returncode == 0
    assert "AC-8 PASS" in res.stdout and "INFO" in res.stderr
    assert cfg
