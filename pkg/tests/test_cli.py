import csv
import json
import math
import subprocess
import sys

import pytest

from fadealloc.cli import (CAPACITY_COLUMNS, OUTAGE_COLUMNS, RunConfig, build_parser,
                           config_from_args, main, parse_db, parse_sweep, run, validate)


def cfg_from(argv):
    return config_from_args(build_parser().parse_args(argv))


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_parse_sweep_and_db():
    assert parse_sweep("0:40:10") == [0, 10, 20, 30, 40]
    assert parse_sweep("0:1:0.25") == [0, 0.25, 0.5, 0.75, 1.0]
    assert parse_sweep("3") == [3.0]
    assert parse_sweep("1,5,7") == [1.0, 5.0, 7.0]
    assert parse_sweep("5:0:1") == []
    assert math.isinf(parse_db("inf"))
    assert parse_db("3") == 3.0


def test_inf_sentinel_maps_to_unconstrained():
    cfg = cfg_from(["capacity", "--papr-db", "inf", "--pav-db", "0"])
    assert math.isinf(cfg.papr_db)
    cfg = cfg_from(["outage", "--beta-db", "inf"])
    assert math.isinf(cfg.beta_db)


@pytest.mark.parametrize("argv, needle", [
    (["outage", "-R", "5"], "rate exceeds input entropy"),
    (["outage", "--papr-db", "-1"], "PAPR >= 1 required"),
    (["capacity", "--pav-db", "5:0:1"], "empty average-power sweep"),
    (["outage", "--scheme", "peak"], "peak scheme needs a finite"),
    (["outage", "-m", "0.3"], "Nakagami m"),
    (["capacity", "--policy", "tw"], "tw policy needs"),
    (["outage", "--constellation", "qam32"], "constellation"),
    (["alloc", "--gains", "1,-2"], "gains must be"),
])
def test_validate_messages(argv, needle):
    problems = validate(cfg_from(argv))
    assert any(needle in p for p in problems), problems


def test_valid_config_has_no_violations():
    assert validate(cfg_from(["outage", "-R", "1", "--papr-db", "10", "--pav-db", "0:40:1"])) == []


def test_exit_codes(capsys):
    assert main(["outage", "-R", "5"]) == 2
    assert "rate exceeds input entropy" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["outage", "--scheme", "nope"])
    assert exc.value.code == 2


def test_numerical_failure_exit_code(monkeypatch, capsys):
    import fadealloc.cli as cli

    def boom(*a, **k):
        raise ArithmeticError("could not bracket")
    monkeypatch.setattr(cli, "outage_sweep", boom)
    assert main(["outage", "--trials", "10", "--pav-db", "0"]) == 3
    err = capsys.readouterr().err
    assert "numerical failure in outage" in err and "R=1.0" in err


def test_outage_csv_and_sidecar(tmp_path):
    out = tmp_path / "o.csv"
    code = main(["outage", "-R", "1", "--papr-db", "10", "--pav-db", "0:20:10",
                 "--trials", "2e4", "--threshold-trials", "2e4", "--seed", "7",
                 "--out", str(out)])
    assert code == 0
    rows = read_csv(out)
    assert tuple(rows[0].keys()) == OUTAGE_COLUMNS
    assert [r["P_av_dB"] for r in rows] == ["0.0", "10.0", "20.0"]
    assert rows[0]["P_peak_dB"] == "10.0" and rows[0]["seed"] == "7"
    p = [float(r["outage"]) for r in rows]
    assert p[0] >= p[1] >= p[2]
    meta = json.loads((tmp_path / "o.csv.meta.json").read_text())
    assert meta["config"]["seed"] == 7
    assert meta["version"]
    assert any(k.startswith("cm:qam16") for k in meta["curves"])
    assert meta["wall_time_s"] >= 0


def test_outage_byte_identical_runs(tmp_path):
    argv = ["outage", "-B", "2", "-R", "2", "--papr-db", "6", "--pav-db", "0:10:5",
            "--trials", "3e4", "--threshold-trials", "3e4", "--seed", "3", "--shards", "2"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(argv + ["--out", str(a)]) == 0
    assert main(argv + ["--out", str(b), "--workers", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_capacity_beta_scan(tmp_path):
    out = tmp_path / "c.csv"
    assert main(["capacity", "--papr-db", "3", "--policy", "tw", "--beta-scan",
                 "--beta-grid", "0:20:5", "--pav-db", "0:10:10", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert tuple(rows[0].keys()) == CAPACITY_COLUMNS
    assert all(r["policy"] == "papr_tw" for r in rows)
    assert all(0 < float(r["capacity_bits"]) <= 4 for r in rows)
    assert all(float(r["quad_err"]) < 1e-6 for r in rows)


def test_capacity_json(tmp_path, capsys):
    assert main(["capacity", "--pav-db", "0", "--format", "json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["columns"][:7] == list(CAPACITY_COLUMNS[:7])
    assert data["rows"][0][2] == "opt"


def test_beta_scan_command(capsys):
    assert main(["beta-scan", "--pav-db", "0", "--beta-grid", "0,10,20"]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert len(rows) == 3
    assert sum(r["best"] == "1" for r in rows) == 1


def test_curves_dumps_cm_and_bicm(capsys):
    assert main(["curves", "--rho-db", "0:10:10"]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert {r["input"].split(":")[0] for r in rows} == {"cm", "bicm"}
    assert all(0 <= float(r["info_bits"]) <= 4 for r in rows)


def test_alloc(capsys):
    assert main(["alloc", "--gains", "0.5,2", "-R", "2"]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert [r["block"] for r in rows] == ["1", "2"]
    assert all(float(r["power"]) > 0 for r in rows)


def test_custom_constellation_file(tmp_path, capsys):
    from fadealloc.constellation import make_psk, save_constellation
    path = tmp_path / "k.json"
    save_constellation(make_psk(3), path)
    assert main(["curves", "--constellation", str(path), "--rho-db", "0"]) == 0
    assert "psk8" in capsys.readouterr().out


def test_cache_env_honoured(tmp_path, monkeypatch):
    monkeypatch.setenv("FADEALLOC_CACHE", str(tmp_path / "cache"))
    (tmp_path / "cache").mkdir()
    assert run(RunConfig("curves", constellation="bpsk", rho_db=[0.0])) == 0
    assert any((tmp_path / "cache").iterdir())


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "fadealloc", "outage", "-R", "9"],
                         capture_output=True, text=True)
    assert res.returncode == 2
    assert "rate exceeds input entropy" in res.stderr
