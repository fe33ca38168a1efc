import csv
import json

import pytest

from qdemon.cli import main, sweep_header


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


SMALL_SWEEP = {"protocol": "B", "physical": {"t1_us": None}, "sweep": {"axis": "eps_fb", "grid": [0.1, 0.4]},
               "n_shots": 3000, "bootstrap": 50}


def test_sweep_writes_csv_and_manifest(tmp_path):
    cfg = _write(tmp_path, SMALL_SWEEP)
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o"), "--seed", "5"]) == 0
    rows = list(csv.reader((tmp_path / "o" / "sweep.csv").open()))
    assert rows[0] == sweep_header(True)
    assert rows[0][:9] == ["param", "avg_exp_bWmIsh", "avg_exp_bWmIqc", "avg_exp_bW", "mean_Iqc", "mean_Ish",
                           "mean_bW", "lambda_fb", "eta"]
    assert [r[0] for r in rows[1:]] == ["0.1", "0.4"]
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["master_seed"] == 5 and len(man["config_sha256"]) == 64 and man["version"]


def test_sweep_is_byte_identical_across_threads(tmp_path):
    cfg = _write(tmp_path, {**SMALL_SWEEP, "n_shots": 20000})
    main(["sweep", "--config", cfg, "--out", str(tmp_path / "a"), "--threads", "1"])
    main(["sweep", "--config", cfg, "--out", str(tmp_path / "b"), "--threads", "4"])
    assert (tmp_path / "a" / "sweep.csv").read_bytes() == (tmp_path / "b" / "sweep.csv").read_bytes()


def test_oracle_columns_optional(tmp_path):
    cfg = _write(tmp_path, {**SMALL_SWEEP, "oracle_mode": "off"})
    main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")])
    header = (tmp_path / "o" / "sweep.csv").read_text().splitlines()[0]
    assert "oracle_" not in header


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["sweep", "--config", _write(tmp_path, {"sweep": {"axis": "eps_fb", "grid": []}}),
                 "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()
    assert main(["sweep", "--config", str(tmp_path / "none.json")]) == 2
    assert main(["sweep", "--config", _write(tmp_path, {"n_shots": 10, "sweep": {"axis": "eps_fb", "grid": [0]}})]) == 2
    assert main(["single", "--config", _write(tmp_path, {"dt_us": 0.5})]) == 2
    assert main(["sweep", "--config", _write(tmp_path, {})]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_divergence_flags_warn_but_succeed(tmp_path, caplog):
    # perfect feedback at T1 -> inf leaves (k, y) cells empty: flagged, exit 0
    doc = {**SMALL_SWEEP, "sweep": {"axis": "eps_fb", "grid": [0.001]}}
    assert main(["sweep", "--config", _write(tmp_path, doc), "--out", str(tmp_path / "o")]) == 0
    assert any("excluded" in r.getMessage() for r in caplog.records)


def test_single(tmp_path, capsys):
    cfg = _write(tmp_path, {"n_shots": 2000, "bootstrap": 20, "physical": {"t1_us": None}})
    assert main(["single", "--config", cfg, "--out", str(tmp_path / "s")]) == 0
    doc = json.loads((tmp_path / "s" / "summary.json").read_text())
    assert doc["oracle"]["avg_exp_sigma_ish"] == pytest.approx(0.903)
    assert (tmp_path / "s" / "shots.csv").read_text().startswith("shot,x,k,y,z,work_hw,n_jumps")


def test_schema_command(capsys):
    assert main(["schema"]) == 0
    assert json.loads(capsys.readouterr().out)["title"] == "qdemon run configuration"
    assert main(["defaults"]) == 0


def test_validate_and_negative_control(tmp_path):
    cfg = _write(tmp_path, {"n_shots": 5000, "bootstrap": 50})
    assert main(["validate", "--config", cfg, "--out", str(tmp_path / "v")]) == 0
    assert main(["validate", "--config", cfg, "--out", str(tmp_path / "f"),
                 "--inject-fault", "jump_normalization"]) == 1
    rep = json.loads((tmp_path / "f" / "validate.json").read_text())
    assert rep["failed"] == ["norm_preservation"]
    assert "FAILED: norm_preservation" in (tmp_path / "f" / "validate.txt").read_text()


def test_validate_skips_relaxation_checks_without_t1(tmp_path):
    cfg = _write(tmp_path, {"n_shots": 2000, "bootstrap": 50, "physical": {"t1_us": None}})
    assert main(["validate", "--config", cfg, "--out", str(tmp_path / "v")]) == 0
    rep = json.loads((tmp_path / "v" / "validate.json").read_text())
    skipped = {c["name"] for c in rep["checks"] if c["status"] == "skip"}
    assert skipped == {"free_decay", "dt_convergence"}
