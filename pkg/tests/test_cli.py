import csv
import json
import math

import numpy as np
import pytest

from explab import cli
from explab.exponents import SolverError


def run(*argv):
    return cli.main([str(a) for a in argv])


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_exponent_grid_and_manifest(tmp_path):
    out = tmp_path / "e.csv"
    assert run("exponent", "--channel", "bsc:0.1", "--q", "uniform", "--metric", "matched", "--fixed-l", 4,
               "--rates", "0:0.7:0.01", "--base", 2, "--out", out) == 0
    data = rows(out)
    assert len(data) == 71
    assert list(data[0]) == ["rate", "value", "label", "log_base"]
    assert {r["log_base"] for r in data} == {"2"}
    assert float(data[-1]["rate"]) == pytest.approx(0.7)
    manifest = json.loads((tmp_path / "e.csv.manifest.json").read_text())
    assert manifest["outputs"] == [str(out)]
    assert len(manifest["config_hash"]) == 64

    # re-running the recorded command line reproduces the CSV byte for byte
    before = out.read_bytes()
    assert cli.main(manifest["argv"]) == 0
    assert out.read_bytes() == before


def test_exponent_single_rate(tmp_path):
    out = tmp_path / "one.csv"
    assert run("exponent", "--channel", "bsc:0.1", "--rates", "0.5:0.5:0.01", "--out", out) == 0
    assert len(rows(out)) == 1


def test_exponent_mmi_equals_matched(tmp_path):
    out = tmp_path / "m.csv"
    assert run("exponent", "--channel", "bsc:0.1", "--metric", "matched", "--metric", "mmi", "--fixed-l", 2,
               "--rates", "0:0.5:0.05", "--base", 2, "--out", out) == 0
    curves = cli.read_curves(out)
    a, b = curves["E1_matched_L2"][1], curves["E1_mmi_L2"][1]
    assert len(a) == 11
    assert np.max(np.abs(a - b)) <= 1e-3


def test_exponent_units(tmp_path):
    nats, bits = tmp_path / "n.csv", tmp_path / "b.csv"
    assert run("exponent", "--channel", "bsc:0.1", "--classical", "random-coding", "--rates",
               f"{0.2 * math.log(2)}:{0.2 * math.log(2)}:0.1", "--out", nats) == 0
    assert run("exponent", "--channel", "bsc:0.1", "--classical", "random-coding", "--rates", "0.2:0.2:0.1",
               "--base", 2, "--out", bits) == 0
    vn, vb = float(rows(nats)[0]["value"]), float(rows(bits)[0]["value"])
    assert vb == pytest.approx(vn / math.log(2), rel=1e-12)
    assert rows(nats)[0]["log_base"] == "e"


def test_exponent_writes_inf_token(tmp_path):
    out = tmp_path / "sp.csv"
    ch = '{"x_size": 2, "y_size": 2, "rows": [[1, 0], [0, 1]]}'
    assert run("exponent", "--channel", ch, "--classical", "sphere-packing", "--rates", "0.1:0.2:0.1",
               "--out", out) == 0
    assert [r["value"] for r in rows(out)] == ["inf", "inf"]
    assert np.isinf(cli.read_curves(out)["E_sp"][1]).all()


@pytest.mark.parametrize("argv", [
    ["exponent", "--channel", "bsc:0.1", "--rates", "0.5:0.1:0.1"],
    ["exponent", "--channel", "bsc:0.1", "--rates", "abc"],
    ["exponent", "--channel", "nonsense", "--rates", "0:0.1:0.1"],
    ["exponent", "--channel", "bsc:0.1", "--rates", "0:0.1:0.1", "--base", "10"],
    ["exponent", "--channel", "bsc:0.1", "--rates", "0:0.1:0.1", "--fixed-l", "0"],
    ["exponent", "--channel", "bsc:0.1", "--rates", "0:0.1:0.1", "--metric", "bogus"],
    ["simulate", "--channel", "bsc:0.1", "--rate", "0.3"],
    ["validate", "--only", "nope"],
])
def test_bad_flags_exit_2(argv, tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(argv + (["--out", str(tmp_path / "x")] if argv[0] == "exponent" else []))
    assert exc.value.code == 2


def test_solver_failure_exits_1(tmp_path, monkeypatch, capsys):
    def boom(*args, **kwargs):
        raise SolverError("no convergence")

    monkeypatch.setattr(cli, "sweep", boom)
    assert run("exponent", "--channel", "bsc:0.1", "--rates", "0:0.1:0.1", "--out", tmp_path / "f.csv") == 1
    assert "solver failure" in capsys.readouterr().err


def test_simulation_resource_cap_exits_1(tmp_path):
    assert run("simulate", "--channel", "bsc:0.1", "--n", 200, "--rate", 0.5, "--mode", "explicit",
               "--trials", 10, "--out", tmp_path / "s.json") == 1


def test_simulate_constant_metric(tmp_path, capsys):
    out = tmp_path / "s.json"
    assert run("simulate", "--channel", "bsc:0.1", "--n", 20, "--rate", 0.35, "--base", 2, "--metric",
               "constant:0", "--fixed-l", 3, "--trials", 500, "--out", out) == 0
    res = json.loads(out.read_text())
    assert res["p_hat"] == pytest.approx((1 - 1 / res["M"]) ** 3, rel=1e-12)
    assert res["M"] == math.floor(2 ** 7)
    assert json.loads(capsys.readouterr().out) == res
    assert json.loads((tmp_path / "s.json.manifest.json").read_text())["seed"] == 0


def test_simulate_seed_repetition(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ["simulate", "--channel", "bsc:0.1", "--n", 30, "--rate", 0.3, "--base", 2, "--trials", 3000,
            "--seed", 17]
    assert run(*args, "--out", a) == 0
    assert run(*args, "--out", b) == 0
    assert a.read_text() == b.read_text()


def test_simulate_config_file_and_grid(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"channel": "bsc:0.1", "rate": 0.2, "base": "2", "trials": 3000, "seed": 4,
                                "mode": "enumerator"}))
    out = tmp_path / "g.json"
    assert run("simulate", "--config", conf, "--n-grid", "10,20,30", "--out", out) == 0
    res = json.loads(out.read_text())
    assert {"slope", "slope_ci", "points", "n"} <= set(res)
    assert res["n"] == [10, 20, 30]


def test_reproduce_fig1_contract(tmp_path):
    outdir = tmp_path / "fig"
    assert run("reproduce-fig1", "--outdir", outdir, "--step", 0.05) == 0
    labels = {p.stem for p in outdir.glob("*.csv")}
    assert labels == set(cli.FIG1_LABELS)
    assert (outdir / "fig1.gp").exists()
    manifest = json.loads((outdir / "manifest.json").read_text())
    assert len(manifest["outputs"]) == 6
    curves = {k: cli.read_curves(outdir / f"{k}.csv")[k] for k in cli.FIG1_LABELS}
    er, e1, det = curves["E_r"][1], curves["E1_L4"][1], curves["E1det_L4"][1]
    assert np.max(np.abs(e1 - er)) <= 1e-3
    assert np.all(det >= e1 - 1e-9)
    assert curves["E2_lambda"][0][0] == pytest.approx(0.1)
    for r in curves["E_r"][0]:
        assert float(r) <= 0.532


def test_validate_single_suite(capsys):
    assert run("validate", "--only", "xi-star") == 0
    out = capsys.readouterr().out.splitlines()
    assert all("xi-star" in line for line in out[:-1])
    assert out[-1] == "10/10 checks passed"


def test_validate_zero_tolerance_fails(capsys):
    assert run("validate", "--only", "lambert", "--only", "integral", "--tolerance", 0) == 1
    assert "FAIL" in capsys.readouterr().out


def test_config_hash_is_order_independent():
    assert cli.config_hash({"a": 1, "b": [1, 2]}) == cli.config_hash({"b": [1, 2], "a": 1})
    assert cli.config_hash({"a": 1}) != cli.config_hash({"a": 2})
