import json
import os

import pytest

from smoothlift import cli
from smoothlift.harness import (
    ConfigError, ExperimentConfig, RunRecord, VersionMismatch, load_constants, report, run,
)


def test_junta_maj_k6_summary():
    r = run(ExperimentConfig("junta-maj", k=6))
    assert r.summary["best_agreement"]["6"] == 0.75
    assert r.passed


def test_odd_k_rejected_where_even_required():
    with pytest.raises(ConfigError, match="even k"):
        run(ExperimentConfig("junta-maj", k=7))


def test_unknown_fields_rejected():
    with pytest.raises(ConfigError, match="bogus"):
        ExperimentConfig.from_dict({"experiment": "spectral", "bogus": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig("not-an-experiment")


def test_zero_trials_is_no_data():
    r = run(ExperimentConfig("weak-learn-uniform", trials=0))
    assert r.rows == [] and r.summary["status"] == "no data" and r.passed is None


def test_config_echoed_verbatim(tmp_path):
    cfg = ExperimentConfig("rounding", trials=3, k=4, seed=11, out=str(tmp_path / "r.csv"))
    r = run(cfg)
    assert r.config == cfg.to_dict()
    saved = json.loads((tmp_path / "r.csv.summary.json").read_text())
    assert ExperimentConfig.from_dict(saved["config"]) == cfg


def test_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(ExperimentConfig("corr-variance", trials=10, seed=5, out=str(a)))
    run(ExperimentConfig("corr-variance", trials=10, seed=5, out=str(b)))
    assert a.read_bytes() == b.read_bytes()


def test_workers_do_not_change_rows():
    serial = run(ExperimentConfig("rounding", trials=6, seed=3))
    parallel = run(ExperimentConfig("rounding", trials=6, seed=3, workers=2))
    assert serial.rows_csv() == parallel.rows_csv()


def test_json_format_round_trip(tmp_path):
    out = tmp_path / "s.json"
    r = run(ExperimentConfig("spectral", trials=2, k=3, format="json", out=str(out)))
    back = RunRecord.from_dict(json.loads(out.read_text()))
    assert back.rows_csv() == r.rows_csv() and back.version == r.version


def test_failed_run_leaves_no_files(tmp_path, monkeypatch):
    import smoothlift.harness as h

    def boom(*a, **k):
        raise RuntimeError("interrupted")

    monkeypatch.setattr(h.os, "replace", boom)
    with pytest.raises(RuntimeError):
        run(ExperimentConfig("spectral", trials=1, k=2, out=str(tmp_path / "x.csv")))
    assert os.listdir(tmp_path) == []


def test_report_rows_and_not_run():
    rec = run(ExperimentConfig("spectral", trials=2, k=3))
    rows = report([rec])
    assert len(rows) == 13
    assert rows[0].status == "pass"
    assert all(r.status == "not run" for r in rows[1:])


def test_report_reproducibility_row():
    a = run(ExperimentConfig("rounding", trials=2))
    b = run(ExperimentConfig("rounding", trials=2, workers=2))
    assert report([a, b])[12].status == "pass"


def test_report_refuses_mixed_versions():
    a = run(ExperimentConfig("spectral", trials=1, k=2))
    b = RunRecord.from_dict(a.to_dict())
    b.version = "9.9.9"
    with pytest.raises(VersionMismatch) as exc:
        report([a, b])
    assert a.version in str(exc.value) and "9.9.9" in str(exc.value)


def test_constants_env_override(tmp_path, monkeypatch):
    c = load_constants()
    c["junta_maj"]["half_junta_agreement_k6"] = 0.5
    path = tmp_path / "c.json"
    path.write_text(json.dumps(c))
    monkeypatch.setenv("SMOOTHLIFT_CONSTANTS", str(path))
    assert run(ExperimentConfig("junta-maj", k=6)).passed is False


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["junta-maj", "--k", "6"]) == 0
    assert cli.main(["junta-maj", "--k", "7"]) == 2
    assert cli.main(["junta-maj", "--bogus"]) == 2
    out = tmp_path / "c.csv"
    assert cli.main(["covering", "--trials", "3", "--seed", "4", "--out", str(out)]) == 0
    assert cli.main(["report", str(out) + ".summary.json"]) == 0


def test_cli_flags_round_trip():
    args = cli.build_parser().parse_args(
        ["memorize-baseline", "--k", "3", "--n", "2", "--m", "8", "--kappa", "2", "--trials", "4",
         "--delta", "0.1", "--seed", "0x10", "--out", "o.csv", "--format", "json", "--fix-inner",
         "--tie-rule", "-1", "--grid", "8", "--u-override", "3", "--workers", "2"])
    cfg = cli.config_from_args(args)
    assert cfg == ExperimentConfig.from_dict(cfg.to_dict())
    assert (cfg.k, cfg.n, cfg.m, cfg.kappa, cfg.trials, cfg.delta, cfg.seed, cfg.out, cfg.format,
            cfg.fix_inner, cfg.tie_rule, cfg.grid, cfg.u_override, cfg.workers) == \
        (3, 2, 8, 2.0, 4, 0.1, 16, "o.csv", "json", True, "-1", 8, 3, 2)
