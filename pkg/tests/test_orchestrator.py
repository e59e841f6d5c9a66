import json
import os

import pytest

from habvsm.orchestrator import EVENT, NONE, PERIODIC, OperatorAction, Vsm
from habvsm.runner import Runner, replay_check
from habvsm.scenario import parse_scenario
from habvsm.simulation import SimState


def short_scenario(habitat_dir, duration=650, seed=11):
    return parse_scenario(
        os.path.join(habitat_dir, "habitat.cfg"),
        seed_override=seed,
        duration_override=duration,
    )


def test_replan_trigger_precedence(habitat_dir):
    scenario = short_scenario(habitat_dir)
    vsm = Vsm(scenario, SimState(scenario.sim_model, seed=1))
    assert vsm.replan_trigger(600.0, None, False) == PERIODIC
    assert vsm.replan_trigger(599.0, None, False) == NONE
    from habvsm.orchestrator import FaultEvent

    event = FaultEvent(599, 599.0, ("load05_heater_a.stuck_on",), exact=True)
    assert vsm.replan_trigger(599.0, event, False) == EVENT
    # both in one cycle: event outranks periodic
    assert vsm.replan_trigger(600.0, event, False) == EVENT
    assert vsm.replan_trigger(600.0, None, True) == EVENT  # plan failure


def test_periodic_cadence_short_run(habitat_dir, tmp_path):
    scenario = short_scenario(habitat_dir, duration=900)
    runner = Runner(scenario, str(tmp_path / "out"))
    runner.run()
    assert runner.vsm.ledger.replans_periodic == 3  # t=300, 600, 900


def test_bus_trip_event_replan_and_forced_off(habitat_dir, tmp_path):
    scenario = parse_scenario(
        os.path.join(habitat_dir, "bus_trip.cfg"), duration_override=1900
    )
    runner = Runner(scenario, str(tmp_path / "out"))
    runner.run()
    vsm = runner.vsm
    assert vsm.ledger.replans_event == 1
    assert vsm.ledger.faults_confirmed >= 1
    # bus4 feeds load07 and load08: both excluded after the trip
    assert "load07_sci_rack_b" in vsm.forced_off
    assert "load08_comm_xpndr" in vsm.forced_off
    assert vsm.last_fault_event.modes == ("bus4.trip",)
    assert vsm.last_impacts is not None
    lost_components = {c for c, _f in vsm.last_impacts.lost}
    assert {"bus4", "load07_sci_rack_b", "load08_comm_xpndr"} <= lost_components
    # forced-off loads stay off in the amended schedule's remaining slots
    sched = vsm.current_schedule
    problem = vsm.current_problem
    for lid in ("load07_sci_rack_b", "load08_comm_xpndr"):
        assert all(v == 0 for v in sched.modes[lid][problem.frozen_slots:])
    assert vsm.ledger.validator_violations == 0


def test_confirmation_cycle_is_injection_plus_debounce(habitat_dir, tmp_path):
    scenario = parse_scenario(
        os.path.join(habitat_dir, "bus_trip.cfg"), duration_override=1900
    )
    runner = Runner(scenario, str(tmp_path / "out"))
    runner.run()
    # effect first visible in the frame at the injection time; K-1 further
    # consecutive failing frames confirm it
    k = scenario.vsm.fault_debounce_frames
    confirm_cycle = runner.vsm.last_fault_event.cycle
    assert confirm_cycle == 1800 + k - 1
    # the event replan request was published in the confirmation cycle
    with open(os.path.join(str(tmp_path / "out"), "cycles.log")) as fh:
        for line in fh:
            rec = json.loads(line)
            if rec["replan"] == "EVENT":
                assert rec["cycle"] == confirm_cycle
                break
        else:
            pytest.fail("no event replan logged")


def test_degraded_draw_amendment_validates(habitat_dir, tmp_path):
    # The fault is latent until the heater's next scheduled ON run, so give
    # the run a full duty window beyond the injection.
    scenario = parse_scenario(
        os.path.join(habitat_dir, "degraded_draw.cfg"), duration_override=2500
    )
    runner = Runner(scenario, str(tmp_path / "out"))
    runner.run()
    vsm = runner.vsm
    assert vsm.degraded_draw.get("load05_heater_a") == pytest.approx(1.6)
    assert any("draw x1.6" in a for a in vsm.active_amendments)
    assert vsm.ledger.validator_violations == 0
    # amended problem carries the increased draw
    spec = next(l for l in vsm.current_problem.loads if l.id == "load05_heater_a")
    assert spec.power_draw_w == pytest.approx(240.0 * 1.6)


def test_empty_impact_fault_annotates_only(habitat_dir, tmp_path):
    scenario = short_scenario(habitat_dir, duration=400)
    scenario.injections.append(_aux_bias_injection())
    runner = Runner(scenario, str(tmp_path / "out"))
    runner.run()
    vsm = runner.vsm
    assert vsm.ledger.faults_confirmed == 1
    assert not vsm.forced_off
    assert vsm.last_fault_event.modes == ("ls.cabin_press_kpa.bias",)
    # a sensor-only fault touches no scheduled component: no event replan
    assert vsm.ledger.replans_event == 0
    # amending for it explicitly leaves the problem unchanged except annotation
    before = vsm._build_current_problem(elapsed_s=400.0)
    amended = vsm.respond_to_fault(
        frozenset({"ls.cabin_press_kpa.bias"}), None, elapsed_s=400.0
    )
    assert amended.forced_off == before.forced_off == set()
    assert [l.power_draw_w for l in amended.loads] == [l.power_draw_w for l in before.loads]
    assert "annotate ls.cabin_press_kpa.bias" in amended.amendments


def _aux_bias_injection():
    from habvsm.simulation import FaultInjection

    return FaultInjection("ls.cabin_press_kpa.bias", 100.0)


def test_non_interference_of_advisory_components(habitat_dir, tmp_path):
    """Disabling anomaly detection and mode estimation changes neither the
    telemetry nor the plan transitions nor any scheduling decision."""
    base = parse_scenario(
        os.path.join(habitat_dir, "bus_trip.cfg"), duration_override=1900
    )
    out_a = str(tmp_path / "a")
    Runner(base, out_a).run()

    disabled = parse_scenario(
        os.path.join(habitat_dir, "bus_trip.cfg"), duration_override=1900
    )
    disabled.vsm.disable_anomaly = True
    disabled.vsm.disable_mode_estimation = True
    out_b = str(tmp_path / "b")
    Runner(disabled, out_b).run()

    assert replay_check(
        os.path.join(out_a, "telemetry.log"), os.path.join(out_b, "telemetry.log")
    )[0] == "IDENTICAL"
    assert replay_check(
        os.path.join(out_a, "transitions.log"), os.path.join(out_b, "transitions.log")
    )[0] == "IDENTICAL"
    # scheduling outputs identical: compare solver stats
    ma = json.load(open(os.path.join(out_a, "metrics.json")))
    mb = json.load(open(os.path.join(out_b, "metrics.json")))
    assert ma["solver"] == mb["solver"]
    assert ma["counters"]["faults_confirmed"] == mb["counters"]["faults_confirmed"]


def test_ledger_commands_match_transition_log(habitat_dir, tmp_path):
    scenario = short_scenario(habitat_dir, duration=700)
    out = str(tmp_path / "out")
    runner = Runner(scenario, out)
    runner.run()
    emitted = 0
    with open(os.path.join(out, "cycles.log")) as fh:
        for line in fh:
            emitted += len(json.loads(line)["commands"])
    assert runner.vsm.ledger.commands_issued == emitted


def test_approval_gate_auto_commit(habitat_dir, tmp_path):
    scenario = parse_scenario(
        os.path.join(habitat_dir, "bus_trip.cfg"), duration_override=1900
    )
    runner = Runner(scenario, str(tmp_path / "out"))
    runner.attach_operator()  # proposals now require approval
    runner.run()
    vsm = runner.vsm
    # the event replan proposal was never answered: it auto-committed
    assert vsm.pending_approval is None
    assert vsm.ledger.replans_event == 1
    with open(os.path.join(str(tmp_path / "out"), "cycles.log")) as fh:
        records = [json.loads(l) for l in fh]
    event_cycle = next(r["cycle"] for r in records if r["replan"] == "EVENT")
    assert not next(r for r in records if r["cycle"] == event_cycle)["replan_committed"]
    commit_cycle = next(
        r["cycle"]
        for r in records
        if r["cycle"] > event_cycle and r["replan_committed"]
    )
    assert commit_cycle - event_cycle == pytest.approx(
        scenario.vsm.approval_timeout_s, abs=1
    )


def test_approval_gate_hold_keeps_current_plan(habitat_dir, tmp_path):
    scenario = parse_scenario(
        os.path.join(habitat_dir, "bus_trip.cfg"), duration_override=1830
    )
    runner = Runner(scenario, str(tmp_path / "out"))
    runner.attach_operator()
    # Confirmation and proposal land at cycle 1802 (plan-0008); hold shortly after.
    runner.schedule_action(1805.0, OperatorAction("hold", {"plan_id": "plan-0008"}))
    runner.run()
    vsm = runner.vsm
    assert vsm.pending_approval is None
    assert vsm.ledger.operator_actions == 1
    assert vsm.current_plan_id == "plan-0007"  # prior plan kept running


def test_approval_gate_approve_commits(habitat_dir, tmp_path):
    scenario = parse_scenario(
        os.path.join(habitat_dir, "bus_trip.cfg"), duration_override=1830
    )
    runner = Runner(scenario, str(tmp_path / "out"))
    runner.attach_operator()
    runner.schedule_action(1805.0, OperatorAction("approve", {"plan_id": "plan-0008"}))
    runner.run()
    vsm = runner.vsm
    assert vsm.pending_approval is None
    assert vsm.current_plan_id == "plan-0008"


def test_component_failure_degrades_cycle_without_blocking(habitat_dir, tmp_path):
    scenario = short_scenario(habitat_dir, duration=5)
    runner = Runner(scenario, str(tmp_path / "out"))

    def boom(frame):
        raise RuntimeError("sensor feed wedged")

    runner.vsm.detector.update = boom
    runner.run()
    with open(str(tmp_path / "out" / "cycles.log")) as fh:
        records = [__import__("json").loads(l) for l in fh]
    assert all("isolation" in r["degraded"] for r in records)
    assert len(records) == 5  # the loop never blocked on the failed component
