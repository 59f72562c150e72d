import csv
import hashlib
import json

import pytest

from shockvol.cli import main

BASE = "D = 0.3\nC_sf = 0.5\nsigma0 = 0.1\nn_samples = 4000\nchunk_size = 1500\n"


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def write_cfg(path, extra=""):
    path.write_text(BASE + extra)
    return str(path)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_constants_and_manifest(work):
    cfg = write_cfg(work / "a.cfg")
    assert main(["constants", "--config", cfg, "--out", "c.csv"]) == 0
    rows = {r["name"]: r for r in read_rows(work / "c.csv")}
    assert float(rows["C_sf"]["value"]) == pytest.approx(0.5, rel=1e-13)
    assert rows["c_sf"]["formula"]
    man = json.loads((work / "c.csv.manifest.json").read_text())
    digest = hashlib.sha256((work / "c.csv").read_bytes()).hexdigest()
    assert man["outputs"] == {"c.csv": digest}
    assert man["command"] == "constants" and "wall_time_s" in man and man["tool_version"]
    assert man["config"]["D"] == 0.3


def test_price_rows_do_not_depend_on_grid(work):
    cfg = write_cfg(work / "a.cfg", "kappa = -0.05, 0, 0.05\nt = 0.001, 0.1\n")
    small = write_cfg(work / "b.cfg", "kappa = 0.05\nt = 0.1\n")
    assert main(["price", "--config", cfg, "--out", "full.csv"]) == 0
    assert main(["price", "--config", small, "--out", "one.csv"]) == 0
    full = read_rows(work / "full.csv")
    one = read_rows(work / "one.csv")
    assert len(full) == 6
    match = [r for r in full if r["kappa"] == one[0]["kappa"] and r["t"] == one[0]["t"]]
    assert match == one


def test_flags_override_config(work):
    cfg = write_cfg(work / "a.cfg", "kappa = 0\nt = 0.01\n")
    main(["price", "--config", cfg, "--out", "a.csv"])
    main(["price", "--config", cfg, "--out", "b.csv", "--seed", "11"])
    assert (work / "a.csv").read_bytes() != (work / "b.csv").read_bytes()
    man = json.loads((work / "b.csv.manifest.json").read_text())
    assert man["config"]["master_seed"] == 11


def test_rerun_from_manifest_is_bit_identical(work):
    cfg = write_cfg(work / "a.cfg", "kappa = 0, 0.1\nt = 0.01\n")
    main(["smile", "--config", cfg, "--out", "s.csv", "--seed", "3", "--workers", "2"])
    man = json.loads((work / "s.csv.manifest.json").read_text())
    (work / "again.cfg").write_text(man["config_text"].replace("out = s.csv", "out = s2.csv"))
    assert main(["smile", "--config", "again.cfg"]) == 0
    assert (work / "s.csv").read_bytes() == (work / "s2.csv").read_bytes()


def test_json_format_and_row_errors(work):
    cfg = write_cfg(work / "a.cfg", "kappa = -0.1, 0.02\nt = 0.01\n")
    assert main(["tail", "--config", cfg, "--out", "t.json", "--format", "json"]) == 0
    rows = json.loads((work / "t.json").read_text())
    assert "DomainError" in rows[0]["error"]
    assert rows[1]["error"] == "" and rows[1]["logp_mc"] < 0


def test_ou_bound_summary(work):
    cfg = write_cfg(work / "a.cfg", "t = 0.5\nkappa = 0, 0.1\nou_paths = 500\n")
    assert main(["ou-bound", "--config", cfg, "--out", "ou.csv"]) == 0
    summary = json.loads((work / "ou.csv.manifest.json").read_text())["summary"]
    assert summary["all_dominated"] and summary["all_prices_ordered"]
    assert len(read_rows(work / "ou.csv")) == 500


def test_stdout_and_default_manifest(work, capsys):
    assert main(["constants"]) == 0
    assert capsys.readouterr().out.startswith("name,value,formula")
    assert (work / "shockvol-constants.manifest.json").exists()


def test_config_error_exit_code(work, capsys):
    (work / "bad.cfg").write_text("D = 0.9\n")
    assert main(["constants", "--config", "bad.cfg"]) == 2
    assert "field 'D'" in capsys.readouterr().err
    assert main(["constants", "--config", "missing.cfg"]) == 2
    assert main(["price"]) == 2  # no grid


def test_verify_passes_on_consistent_expectations(work):
    cfg = write_cfg(work / "v.cfg", "verify_scale = 0.01\nexpect_C_sf = 0.5\nexpect_sigma0 = 0.1\n")
    assert main(["verify", "--config", cfg, "--only", "C06", "--out", "r.csv"]) == 0


def test_verify_negative_control_fails(work):
    # V from the reference setting with a perturbed D: the tail constant moves
    (work / "v.cfg").write_text(
        "D = 0.31\nV = 1.7726174756866779\nsigma0 = 0.1\nverify_scale = 0.01\nexpect_C_sf = 0.5\n"
    )
    assert main(["verify", "--config", "v.cfg", "--only", "C06", "--out", "r.csv"]) == 3
    rows = read_rows(work / "r.csv")
    assert rows[0]["id"] == "C00" and rows[0]["passed"] == "false"
