import csv
import json

import pytest

from hybridtrial.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, _parse_grid_spec, main
from hybridtrial.config import ConfigError

FAST_SIM_CONFIG = {
    "schema_version": 1,
    "design": {"n_experimental": 80, "n_control": 80, "target_events": 100},
    "grid": {"hr_experimental": [0.78], "hr_external": [1.0, 2.0]},
    "methods": ["no_borrow", "two_step"],
    "n_replicates": 4,
    "master_seed": 9,
    "sampler": {"n_chains": 2, "n_iter": 400, "n_burnin": 200},
}

PLAN_CONFIG = {
    "schema_version": 1,
    "planner": {
        "n_experimental": 450,
        "n_control": 450,
        "accrual_rate": 34.0,
        "external_rate": 11.3,
        "t_historic": 0.0,
        "baseline_hazard": 0.043,
        "hr_experimental": 0.78,
        "p_lost": 0.05,
        "target_events": 655.0,
    },
}


def write_config(tmp_path, cfg, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def test_default_threads_env_var(monkeypatch):
    from hybridtrial.cli import _default_threads

    monkeypatch.setenv("HYBRIDTRIAL_THREADS", "3")
    assert _default_threads() == 3
    monkeypatch.setenv("HYBRIDTRIAL_THREADS", "not-a-number")
    assert _default_threads() >= 1
    monkeypatch.delenv("HYBRIDTRIAL_THREADS")
    assert _default_threads() >= 1


def test_parse_grid_spec():
    assert _parse_grid_spec("1,2,3.5") == (1.0, 2.0, 3.5)
    assert _parse_grid_spec("6:12:2") == (6.0, 8.0, 10.0, 12.0)
    assert _parse_grid_spec("0.5:2.0:0.5") == (0.5, 1.0, 1.5, 2.0)
    with pytest.raises(ConfigError):
        _parse_grid_spec("5:1:1")
    with pytest.raises(ConfigError):
        _parse_grid_spec("a,b")


def test_simulate_writes_csv_and_manifest(tmp_path):
    cfg = write_config(tmp_path, FAST_SIM_CONFIG)
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg, "--out", str(out), "--threads", "1"]) == EXIT_OK
    rows = read_csv(out / "oc_grid.csv")
    assert [r["method"] for r in rows] == ["no_borrow", "two_step"] * 2
    assert rows[0]["hr_exp"] == "0.78"
    assert {r["hr_rwd"] for r in rows} == {"1", "2"}
    assert all(r["n_reps"] == "4" for r in rows)
    # two_step rows carry the decay tuning value; no_borrow has none
    assert rows[1]["tuning_value"] == "8.25"
    assert rows[0]["tuning_value"] == ""
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["outputs"] == ["oc_grid.csv"]
    assert len(manifest["config_digest"]) == 64
    assert manifest["master_seed"] == 9


def test_simulate_byte_identical_across_runs_and_threads(tmp_path):
    cfg = write_config(tmp_path, FAST_SIM_CONFIG)
    outputs = []
    for i, threads in enumerate(("1", "2", "1")):
        out = tmp_path / f"out{i}"
        assert main(["simulate", "--config", cfg, "--out", str(out), "--threads", threads]) == 0
        outputs.append((out / "oc_grid.csv").read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]


def test_simulate_seed_override_changes_output(tmp_path):
    cfg = write_config(tmp_path, FAST_SIM_CONFIG)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    main(["simulate", "--config", cfg, "--out", str(out1), "--threads", "1"])
    main(["simulate", "--config", cfg, "--out", str(out2), "--threads", "1", "--seed", "10"])
    assert (out1 / "oc_grid.csv").read_bytes() != (out2 / "oc_grid.csv").read_bytes()
    d1 = json.loads((out1 / "manifest.json").read_text())["config_digest"]
    d2 = json.loads((out2 / "manifest.json").read_text())["config_digest"]
    assert d1 != d2


def test_simulate_config_error_emits_nothing(tmp_path):
    bad = dict(FAST_SIM_CONFIG)
    bad["tuning"] = {"decay": 1.0}  # unknown key
    cfg = write_config(tmp_path, bad)
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg, "--out", str(out), "--threads", "1"]) == EXIT_CONFIG
    assert not (out / "oc_grid.csv").exists()
    assert not (out / "manifest.json").exists()


def test_simulate_missing_config(tmp_path):
    assert (
        main(["simulate", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
        == EXIT_CONFIG
    )


def test_simulate_infeasible_design(tmp_path):
    bad = json.loads(json.dumps(FAST_SIM_CONFIG))
    bad["design"]["n_control"] = 30  # fewer controls than the hybrid arm needs
    cfg = write_config(tmp_path, bad)
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg, "--out", str(out), "--threads", "1"]) == EXIT_INFEASIBLE
    assert not (out / "oc_grid.csv").exists()


def test_calibrate_writes_table(tmp_path):
    cfg = write_config(tmp_path, FAST_SIM_CONFIG)
    out = tmp_path / "cal"
    code = main(
        [
            "calibrate", "--config", cfg, "--out", str(out),
            "--method", "two_step", "--grid", "4,20",
            "--target-power", "0", "--t1e-scenarios", "1.3",
            "--reps", "30", "--threads", "1",
        ]
    )
    assert code == EXIT_OK
    rows = read_csv(out / "calibration_table.csv")
    assert [r["candidate_value"] for r in rows] == ["4", "20"]
    assert sum(r["selected"] == "true" for r in rows) == 1
    assert "t1e_at_1.3" in rows[0]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["feasible"] is True
    assert manifest["selected"] is not None


def test_calibrate_infeasible_target_still_writes_table(tmp_path):
    cfg = write_config(tmp_path, FAST_SIM_CONFIG)
    out = tmp_path / "cal"
    code = main(
        [
            "calibrate", "--config", cfg, "--out", str(out),
            "--method", "two_step", "--grid", "8.25",
            "--target-power", "1.01", "--t1e-scenarios", "1.2",
            "--reps", "6", "--threads", "1",
        ]
    )
    assert code == EXIT_INFEASIBLE
    assert (out / "calibration_table.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["feasible"] is False


def test_calibrate_unknown_method(tmp_path):
    cfg = write_config(tmp_path, FAST_SIM_CONFIG)
    code = main(
        ["calibrate", "--config", cfg, "--out", str(tmp_path / "x"),
         "--method", "pool_everything", "--grid", "1"]
    )
    assert code == EXIT_CONFIG


def test_plan_reproduces_reference_design(tmp_path):
    cfg = write_config(tmp_path, PLAN_CONFIG)
    out = tmp_path / "plan"
    assert main(["plan", "--config", cfg, "--out", str(out)]) == EXIT_OK
    rows = {r["design"]: r for r in read_csv(out / "plan_report.csv")}
    assert set(rows) == {"original", "hybrid", "saving"}
    assert rows["hybrid"]["n_randomized"] == "675"
    assert abs(float(rows["hybrid"]["randomization_ratio"]) - 2.0) < 0.05
    assert abs(float(rows["hybrid"]["t_enroll_months"]) - 19.9) < 0.5
    assert abs(float(rows["hybrid"]["t_cutoff_months"]) - 49.0) < 1.0
    assert rows["original"]["n_randomized"] == "900"
    assert abs(float(rows["original"]["t_cutoff_months"]) - 53.0) < 1.0
    assert rows["saving"]["n_randomized"] == "225"
    curves = read_csv(out / "event_curves.csv")
    assert curves[0].keys() == {
        "design", "t_months", "e_events_experimental",
        "e_events_trial_control", "e_events_external",
    }
    assert {r["design"] for r in curves} == {"original", "hybrid"}


def test_plan_zero_target_zero_cutoff(tmp_path):
    cfg_dict = json.loads(json.dumps(PLAN_CONFIG))
    cfg_dict["planner"]["target_events"] = 0.0
    cfg = write_config(tmp_path, cfg_dict)
    out = tmp_path / "plan"
    assert main(["plan", "--config", cfg, "--out", str(out)]) == EXIT_OK
    rows = {r["design"]: r for r in read_csv(out / "plan_report.csv")}
    assert float(rows["hybrid"]["t_cutoff_months"]) == 0.0


def test_plan_infeasible_target(tmp_path):
    cfg_dict = json.loads(json.dumps(PLAN_CONFIG))
    cfg_dict["planner"]["target_events"] = 10_000.0
    cfg = write_config(tmp_path, cfg_dict)
    out = tmp_path / "plan"
    assert main(["plan", "--config", cfg, "--out", str(out)]) == EXIT_INFEASIBLE
    assert not (out / "plan_report.csv").exists()


def test_plan_requires_planner_section(tmp_path):
    cfg = write_config(tmp_path, FAST_SIM_CONFIG)
    assert main(["plan", "--config", cfg, "--out", str(tmp_path / "p")]) == EXIT_CONFIG
