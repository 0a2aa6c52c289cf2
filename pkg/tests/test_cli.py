"""Command-line front end: validation, determinism, exit codes, manifests."""

import csv
import hashlib
import json

import pytest

from rcmlab.cli import config_hash, main
from rcmlab.lattice import build_box


def write_cfg(tmp_path, name, cfg):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


ENV_CFG = {"d": 2, "side": 5, "law": {"kind": "log-uniform",
                                      "params": [0.5, 2.0]}, "seed": 0}


def test_describe_prints_schema(capsys):
    assert main(["env-sample", "--describe"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["experiment"] == "env-sample"
    assert doc["fields"]["law"]["required"] is True
    assert doc["fields"]["seed"]["default"] == 0


def test_missing_config_is_a_usage_error(capsys):
    assert main(["env-sample"]) == 2
    assert "--config" in capsys.readouterr().err


def test_unreadable_and_malformed_configs(tmp_path, capsys):
    assert main(["env-sample", "--config", str(tmp_path / "nope.json")]) == 2
    assert "cannot read" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["env-sample", "--config", str(bad)]) == 2


def test_schema_violations_report_every_field(tmp_path, capsys):
    cfg = dict(ENV_CFG, side=6, wheels=4)
    del cfg["law"]
    path = write_cfg(tmp_path, "cfg.json", cfg)
    assert main(["env-sample", "--config", path]) == 2
    err = capsys.readouterr().err
    assert "wheels: unknown field" in err
    assert "law: required field is missing" in err
    assert "side:" in err


def test_validate_only_prints_hash(tmp_path, capsys):
    path = write_cfg(tmp_path, "cfg.json", ENV_CFG)
    assert main(["env-sample", "--config", path, "--validate-only"]) == 0
    out = capsys.readouterr().out.split()
    assert out[0] == "ok"
    assert len(out[1]) == 64


def test_env_sample_run_and_manifest(tmp_path):
    path = write_cfg(tmp_path, "cfg.json", ENV_CFG)
    out = tmp_path / "out"
    assert main(["env-sample", "--config", path, "--out", str(out)]) == 0
    header, rows = read_rows(out / "env-sample.csv")
    assert header == ["edge_id", "x", "y", "omega", "config_hash"]
    box = build_box(2, 5, "periodic")
    assert len(rows) == box.n_edges
    manifest = json.loads((out / "env-sample.json").read_text())
    assert manifest["rows"] == box.n_edges
    assert all(r[-1] == manifest["config_hash"] for r in rows)
    digest = hashlib.sha256((out / "env-sample.csv").read_bytes()).hexdigest()
    assert manifest["files"]["env-sample.csv"] == digest
    assert manifest["columns"] == header
    conductances = [float(r[3]) for r in rows]
    assert all(0.5 <= w <= 2.0 for w in conductances)


def test_identical_configs_are_byte_identical(tmp_path):
    path = write_cfg(tmp_path, "cfg.json", ENV_CFG)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["env-sample", "--config", path, "--out", str(out1)]) == 0
    assert main(["env-sample", "--config", path, "--out", str(out2)]) == 0
    assert (out1 / "env-sample.csv").read_bytes() == \
        (out2 / "env-sample.csv").read_bytes()
    assert (out1 / "env-sample.json").read_bytes() == \
        (out2 / "env-sample.json").read_bytes()


def test_seed_override_changes_hash_and_data(tmp_path):
    path = write_cfg(tmp_path, "cfg.json", ENV_CFG)
    base, over, explicit = (tmp_path / n for n in ("base", "over", "exp"))
    assert main(["env-sample", "--config", path, "--out", str(base)]) == 0
    assert main(["env-sample", "--config", path, "--seed", "7",
                 "--out", str(over)]) == 0
    path7 = write_cfg(tmp_path, "cfg7.json", dict(ENV_CFG, seed=7))
    assert main(["env-sample", "--config", path7, "--out", str(explicit)]) == 0
    assert (base / "env-sample.csv").read_bytes() != \
        (over / "env-sample.csv").read_bytes()
    assert (over / "env-sample.csv").read_bytes() == \
        (explicit / "env-sample.csv").read_bytes()


WALK_CFG = {"d": 2, "side": 9, "law": None, "t_end": 2.0,
            "n_paths": 6, "seed": 1}


def test_worker_count_never_changes_results(tmp_path):
    path = write_cfg(tmp_path, "cfg.json", WALK_CFG)
    serial, threaded = tmp_path / "serial", tmp_path / "threaded"
    assert main(["walk", "--config", path, "--out", str(serial)]) == 0
    assert main(["walk", "--config", path, "--out", str(threaded),
                 "--jobs", "4"]) == 0
    assert (serial / "walk.csv").read_bytes() == \
        (threaded / "walk.csv").read_bytes()


def test_bad_jobs_value(tmp_path, capsys):
    path = write_cfg(tmp_path, "cfg.json", WALK_CFG)
    assert main(["walk", "--config", path, "--jobs", "0",
                 "--out", str(tmp_path / "x")]) == 2
    assert "jobs" in capsys.readouterr().err


def test_solver_run_conserves_mass(tmp_path):
    cfg = {"d": 2, "side": 5, "law": None, "times": [0.5, 1.0], "seed": 0}
    path = write_cfg(tmp_path, "cfg.json", cfg)
    out = tmp_path / "out"
    assert main(["hk-solve", "--config", path, "--out", str(out)]) == 0
    header, rows = read_rows(out / "hk-solve.csv")
    assert header[:3] == ["t", "c0", "c1"]
    by_time = {}
    p_col = header.index("P")
    for row in rows:
        by_time.setdefault(row[0], 0.0)
        by_time[row[0]] += float(row[p_col])
    assert set(by_time) == {"0.5", "1.0"}
    for total in by_time.values():
        assert total == pytest.approx(1.0, abs=1e-9)
    manifest = json.loads((out / "hk-solve.json").read_text())
    assert manifest["results"]["final_mass_defect"] < 1e-9


def test_numerical_guards_exit_three(tmp_path, capsys):
    # uniformization depth overflow
    cfg = {"d": 2, "side": 5, "law": None, "times": [1.0e7], "seed": 0}
    path = write_cfg(tmp_path, "cfg.json", cfg)
    assert main(["hk-solve", "--config", path,
                 "--out", str(tmp_path / "o1")]) == 3
    assert "numerical guard" in capsys.readouterr().err
    # box too small for the requested diffusive window
    cfg = {"d": 2, "n_list": [4], "law": None, "margin": 0.5, "seed": 0}
    path = write_cfg(tmp_path, "cfg2.json", cfg)
    assert main(["llt-quenched", "--config", path,
                 "--out", str(tmp_path / "o2")]) == 3
    assert "numerical guard" in capsys.readouterr().err


def test_quenched_run_reports_monotonicity(tmp_path):
    cfg = {"d": 2, "n_list": [3, 4], "law": None, "n_times": 2, "seed": 0}
    path = write_cfg(tmp_path, "cfg.json", cfg)
    out = tmp_path / "out"
    assert main(["llt-quenched", "--config", path, "--out", str(out)]) == 0
    header, rows = read_rows(out / "llt-quenched.csv")
    assert header[:5] == ["mode", "n", "K", "T1", "T2"]
    assert [r[0] for r in rows] == ["quenched", "quenched"]
    errs = [float(r[header.index("sup_error")]) for r in rows]
    assert errs[1] < errs[0]
    manifest = json.loads((out / "llt-quenched.json").read_text())
    assert manifest["results"]["errors_decreasing"] is True


def test_config_hash_covers_experiment_name():
    cfg = {"d": 2, "side": 5}
    assert config_hash("env-sample", cfg) != config_hash("hk-solve", cfg)
    assert config_hash("env-sample", cfg) == config_hash("env-sample",
                                                         dict(cfg))
