import json
import os
import subprocess
import sys

import pytest

from habvsm.runner import Runner, replay_check
from habvsm.scenario import parse_scenario


def run_short(habitat_dir, out, duration=400, seed=3, name="habitat.cfg"):
    scenario = parse_scenario(
        os.path.join(habitat_dir, name), seed_override=seed, duration_override=duration
    )
    runner = Runner(scenario, out)
    artifacts = runner.run()
    return runner, artifacts


def test_artifacts_exist_and_nonempty(habitat_dir, tmp_path):
    _runner, artifacts = run_short(habitat_dir, str(tmp_path / "out"))
    for path in (artifacts.telemetry_log, artifacts.transition_log,
                 artifacts.cycle_log, artifacts.metrics_path):
        assert os.path.exists(path)
        assert os.path.getsize(path) > 0
    assert artifacts.exit_status == 0


def test_telemetry_format_and_completeness(habitat_dir, tmp_path):
    runner, artifacts = run_short(habitat_dir, str(tmp_path / "out"), duration=50)
    params = runner.param_order()
    lines = open(artifacts.telemetry_log).read().splitlines()
    assert len(lines) == 50 * len(params)
    first = lines[0].split(",")
    assert first[0] == "1" and first[2] == params[0]
    # counters reconcile with log line counts
    metrics = json.load(open(artifacts.metrics_path))
    assert metrics["counters"]["frames"] == 50


def test_same_seed_byte_identical(habitat_dir, tmp_path):
    _r1, a1 = run_short(habitat_dir, str(tmp_path / "a"), duration=420, seed=9)
    _r2, a2 = run_short(habitat_dir, str(tmp_path / "b"), duration=420, seed=9)
    assert replay_check(a1.telemetry_log, a2.telemetry_log) == ("IDENTICAL", -1)
    assert replay_check(a1.transition_log, a2.transition_log) == ("IDENTICAL", -1)
    assert replay_check(a1.cycle_log, a2.cycle_log) == ("IDENTICAL", -1)


def test_different_seed_diverges_with_cycle(habitat_dir, tmp_path):
    _r1, a1 = run_short(habitat_dir, str(tmp_path / "a"), duration=60, seed=1)
    _r2, a2 = run_short(habitat_dir, str(tmp_path / "b"), duration=60, seed=2)
    verdict, cycle = replay_check(a1.telemetry_log, a2.telemetry_log)
    assert verdict == "DIVERGENT"
    assert cycle >= 1


def test_truncated_log_diverges(habitat_dir, tmp_path):
    _r1, a1 = run_short(habitat_dir, str(tmp_path / "a"), duration=30, seed=1)
    truncated = str(tmp_path / "trunc.log")
    lines = open(a1.telemetry_log).read().splitlines()[: 15 * 208]
    with open(truncated, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    verdict, cycle = replay_check(a1.telemetry_log, truncated)
    assert verdict == "DIVERGENT"
    assert cycle == 16


def test_unreadable_log_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        replay_check(str(tmp_path / "nope.log"), str(tmp_path / "nope2.log"))


def test_cli_run_and_replay(habitat_dir, tmp_path):
    out1 = str(tmp_path / "r1")
    out2 = str(tmp_path / "r2")
    for out in (out1, out2):
        proc = subprocess.run(
            [sys.executable, "-m", "habvsm.cli", "run",
             os.path.join(habitat_dir, "habitat.cfg"),
             "--duration", "200", "--out", out],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert "run complete" in proc.stdout
    proc = subprocess.run(
        [sys.executable, "-m", "habvsm.cli", "replay-check",
         os.path.join(out1, "telemetry.log"), os.path.join(out2, "telemetry.log")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert proc.stdout.strip() == "IDENTICAL"


def test_cli_solve_and_diagnose(tmp_path, habitat_dir):
    problem = tmp_path / "p.prob"
    problem.write_text(
        "[problem]\nhorizon_s = 600\nslot_s = 60\nenergy_budget_wh = 10\n"
        "[loads]\nl1 bus_id=bus1 power_draw_w=60\n"
        "[duty]\nl1 min_on_s=120 period_s=300\n"
        "[peak]\nuniform 100\n[initial]\nl1 OFF\n"
    )
    proc = subprocess.run(
        [sys.executable, "-m", "habvsm.cli", "solve", str(problem)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "status OPTIMAL" in proc.stdout
    assert "validator: clean" in proc.stdout

    results = tmp_path / "r.txt"
    results.write_text("t_bus4_volt FAIL\nt_bus4_switch FAIL\n")
    proc = subprocess.run(
        [sys.executable, "-m", "habvsm.cli", "diagnose",
         os.path.join(habitat_dir, "habitat.dmx"), str(results)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "bus4.trip" in proc.stdout


def test_exit_status_reflects_problems(habitat_dir, tmp_path):
    # force validator violations by shrinking the energy budget after parse
    scenario = parse_scenario(
        os.path.join(habitat_dir, "habitat.cfg"), seed_override=3, duration_override=400
    )
    scenario.sim_model.power.reserve_wh = scenario.sim_model.power.battery_soc_wh + 5000
    runner = Runner(scenario, str(tmp_path / "out"))
    artifacts = runner.run()
    # with no available energy the duty constraints are unsatisfiable, so the
    # solver cannot produce a plan; there is nothing to validate, but the
    # mission keeps running
    assert artifacts.exit_status in (0, 2)
    metrics = json.load(open(artifacts.metrics_path))
    statuses = {s["status"] for s in metrics["solver"]}
    assert "INFEASIBLE" in statuses or "TIMEOUT" in statuses
