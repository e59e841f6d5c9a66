"""Run harness: drives the simulation and autonomy loop, emits artifacts.

Artifacts per run directory:
  telemetry.log   one `cycle,sim_time_s,param_id,value` line per parameter
                  per frame, 9 significant digits, bit-stable for replay
  transitions.log one `cycle,node_id,from,to` line per plan node transition
  cycles.log      one JSON record per cycle (no wall-clock content)
  metrics.json    counters, solver stats, isolation timing distribution

Determinism: the only seeded randomness is simulated sensor noise, so two
runs of the same scenario and seed produce byte-identical logs.
"""

from __future__ import annotations

import json
import os
import queue
import time as _time
from dataclasses import dataclass

from .orchestrator import OperatorAction, Vsm
from .scenario import Scenario
from .simulation import SimState


@dataclass
class RunArtifacts:
    out_dir: str
    telemetry_log: str
    transition_log: str
    cycle_log: str
    metrics_path: str
    exit_status: int


class Runner:
    def __init__(self, scenario: Scenario, out_dir: str):
        self.scenario = scenario
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.sim = SimState(scenario.sim_model, seed=scenario.seed)
        for inj in scenario.injections:
            self.sim.pending_injections.append(inj)
        self.sim.pending_injections.sort(key=lambda f: (f.at_time_s, f.fault_mode_id))
        self.vsm = Vsm(scenario, self.sim)
        self.operator_queue: "queue.Queue[OperatorAction]" = queue.Queue()
        # (at_sim_time_s, action), applied deterministically at that frame
        self.scripted_actions: list[tuple[float, OperatorAction]] = []
        self.snapshot: dict = {}
        self.event_sinks: list = []  # gateway SSE clients
        self.isolation_ms: list[float] = []
        self._latest_frame = None
        self._cycle_reports_tail: list = []

    def attach_operator(self) -> None:
        self.vsm.operator_attached = True

    def submit_action(self, action: OperatorAction) -> None:
        self.operator_queue.put(action)

    def schedule_action(self, at_time_s: float, action: OperatorAction) -> None:
        """Queue an operator action for a specific sim time (reproducible runs)."""
        self.scripted_actions.append((at_time_s, action))
        self.scripted_actions.sort(key=lambda pair: pair[0])

    # -- main loop -------------------------------------------------------------

    def run(self) -> RunArtifacts:
        scn = self.scenario
        dt = scn.frame_dt_s
        n_frames = int(round(scn.duration_s / dt))
        telemetry_path = os.path.join(self.out_dir, "telemetry.log")
        transitions_path = os.path.join(self.out_dir, "transitions.log")
        cycles_path = os.path.join(self.out_dir, "cycles.log")
        metrics_path = os.path.join(self.out_dir, "metrics.json")

        wall_start = _time.perf_counter()
        self.vsm.initial_plan()

        with open(telemetry_path, "w", encoding="utf-8") as tf, \
             open(transitions_path, "w", encoding="utf-8") as nf, \
             open(cycles_path, "w", encoding="utf-8") as cf:
            for _ in range(n_frames):
                next_time = self.sim.sim_time_s + dt
                while self.scripted_actions and self.scripted_actions[0][0] <= next_time:
                    _, action = self.scripted_actions.pop(0)
                    self.vsm.apply_operator_action(action)
                while True:
                    try:
                        action = self.operator_queue.get_nowait()
                    except queue.Empty:
                        break
                    try:
                        self.vsm.apply_operator_action(action)
                    except Exception as exc:
                        self._broadcast({"type": "operator_error", "error": str(exc)})
                frame = self.sim.step(dt, commands=self.vsm.next_commands())
                self._latest_frame = frame
                report = self.vsm.run_cycle(frame)
                if "isolation" in report.timing_ms:
                    self.isolation_ms.append(report.timing_ms["isolation"])
                self._write_telemetry(tf, frame)
                for tr in report.transitions:
                    nf.write(f"{frame.cycle},{tr.node_id},{tr.from_state},{tr.to_state}\n")
                cf.write(self._cycle_record(report) + "\n")
                self._publish_snapshot(frame, report)

        metrics = self._metrics(wall_seconds=_time.perf_counter() - wall_start)
        with open(metrics_path, "w", encoding="utf-8") as mf:
            json.dump(metrics, mf, indent=2, sort_keys=True)
            mf.write("\n")

        ledger = self.vsm.ledger
        exit_status = 0
        if (
            ledger.validator_violations
            or ledger.estimator_exhausted
            or ledger.unresolved_inconsistent
        ):
            exit_status = 2
        return RunArtifacts(
            self.out_dir, telemetry_path, transitions_path, cycles_path, metrics_path,
            exit_status,
        )

    # -- artifact helpers ---------------------------------------------------------

    def _write_telemetry(self, fh, frame) -> None:
        cycle = frame.cycle
        t = f"{frame.sim_time_s:.9g}"
        lines = []
        for pid in self.param_order():
            lines.append(f"{cycle},{t},{pid},{frame.values[pid]:.9g}\n")
        fh.write("".join(lines))

    def param_order(self) -> list[str]:
        return self.scenario.sim_model.parameter_ids()

    def _cycle_record(self, report) -> str:
        record = {
            "cycle": report.cycle,
            "sim_time_s": round(report.sim_time_s, 6),
            "commands": [f"{c.kind}:{c.target}={c.value}" for c in report.commands],
            "transitions": len(report.transitions),
            "replan": report.replan,
            "replan_committed": report.replan_committed,
            "plan_id": report.plan_id,
            "degraded": report.degraded,
            "disagreement": report.diagnoser_disagreement,
        }
        if report.fault_event is not None:
            record["fault_modes"] = list(report.fault_event.modes)
            record["fault_exact"] = report.fault_event.exact
            if report.fault_event.multi_fault_diagnoses:
                record["multi_fault"] = [
                    list(d) for d in report.fault_event.multi_fault_diagnoses
                ]
        if report.anomaly_event is not None:
            record["anomaly"] = report.anomaly_event.verdict
            record["anomaly_distance"] = f"{report.anomaly_event.distance:.9g}"
        if report.estimator_best is not None:
            record["estimate"] = list(report.estimator_best[0])
            record["estimate_faults"] = report.estimator_best[1]
        return json.dumps(record, sort_keys=True, separators=(",", ":"))

    def _metrics(self, wall_seconds: float) -> dict:
        ledger = self.vsm.ledger
        iso = sorted(self.isolation_ms)

        def pct(p):
            if not iso:
                return 0.0
            return iso[min(len(iso) - 1, int(p * len(iso)))]

        return {
            "counters": {
                "frames": ledger.frames,
                "faults_confirmed": ledger.faults_confirmed,
                "replans_periodic": ledger.replans_periodic,
                "replans_event": ledger.replans_event,
                "commands_issued": ledger.commands_issued,
                "operator_actions": ledger.operator_actions,
                "anomalies": ledger.anomalies,
                "validator_violations": ledger.validator_violations,
                "estimator_exhausted": ledger.estimator_exhausted,
                "unresolved_inconsistent": ledger.unresolved_inconsistent,
            },
            "solver": self.vsm.solver_stats,
            "isolation_latency_ms": {
                "p50": pct(0.50),
                "p90": pct(0.90),
                "p99": pct(0.99),
                "max": iso[-1] if iso else 0.0,
            },
            "wall_seconds": wall_seconds,
        }

    # -- gateway support -----------------------------------------------------------

    def _publish_snapshot(self, frame, report) -> None:
        vsm = self.vsm
        fault_panel = None
        if vsm.last_fault_event is not None:
            fault_panel = {
                "modes": list(vsm.last_fault_event.modes),
                "exact": vsm.last_fault_event.exact,
                "cycle": vsm.last_fault_event.cycle,
                "multi_fault_diagnoses": [
                    list(d) for d in vsm.last_fault_event.multi_fault_diagnoses
                ],
            }
        impacts = None
        if vsm.last_impacts is not None:
            impacts = {
                "failed": sorted(vsm.last_impacts.failed),
                "lost": sorted([list(p) for p in vsm.last_impacts.lost]),
                "zft": sorted([list(p) for p in vsm.last_impacts.zft]),
                "redundancy": vsm.last_impacts.redundancy,
            }
        pending = None
        if vsm.pending_approval is not None:
            pending = {
                "plan_id": vsm.pending_approval.plan_id,
                "reason": vsm.pending_approval.reason,
                "proposed_at_s": vsm.pending_approval.proposed_at_s,
                "node_count": vsm.pending_approval.tree.node_count(),
                "mode_changes": vsm.pending_approval.schedule.mode_changes,
            }
        schedule = None
        if vsm.current_schedule is not None:
            schedule = {
                "load_ids": vsm.current_schedule.load_ids,
                "modes": vsm.current_schedule.modes,
                "slot_s": vsm.current_problem.slot_s,
                "objective_value": vsm.current_schedule.objective_value,
                "mode_changes": vsm.current_schedule.mode_changes,
            }
        self.snapshot = {
            "cycle": frame.cycle,
            "sim_time_s": frame.sim_time_s,
            "values": dict(frame.values),
            "staleness": {k: v for k, v in frame.staleness.items() if v},
            "node_states": vsm.executive.node_states(),
            "plan_id": report.plan_id,
            "active_faults": fault_panel,
            "impacts": impacts,
            "pending_approval": pending,
            "schedule": schedule,
            "fault_catalog": self.scenario.sim_model.fault_mode_ids(),
            "amendments": list(vsm.active_amendments),
            "counters": {
                "frames": vsm.ledger.frames,
                "faults_confirmed": vsm.ledger.faults_confirmed,
                "commands_issued": vsm.ledger.commands_issued,
                "replans_periodic": vsm.ledger.replans_periodic,
                "replans_event": vsm.ledger.replans_event,
            },
        }
        event = {
            "type": "cycle",
            "cycle": frame.cycle,
            "sim_time_s": frame.sim_time_s,
            "replan": report.replan,
            "plan_id": report.plan_id,
            "commands": len(report.commands),
            "soc_wh": frame.values.get("battery.soc_wh"),
            "net_w": frame.values.get("power.net_w"),
        }
        if report.anomaly_event is not None:
            event["anomaly"] = report.anomaly_event.verdict
            event["anomaly_distance"] = report.anomaly_event.distance
        self._broadcast(event)
        if report.fault_event is not None:
            self._broadcast(
                {
                    "type": "fault",
                    "cycle": report.cycle,
                    "modes": list(report.fault_event.modes),
                    "exact": report.fault_event.exact,
                    "impacts": impacts,
                }
            )
        if report.replan != "NONE":
            self._broadcast(
                {
                    "type": "plan",
                    "cycle": report.cycle,
                    "reason": report.replan,
                    "committed": report.replan_committed,
                    "plan_id": report.plan_id,
                    "pending": pending,
                }
            )

    def _broadcast(self, event: dict) -> None:
        for sink in list(self.event_sinks):
            try:
                sink.put_nowait(event)
            except Exception:
                pass


def replay_check(log_a: str, log_b: str) -> tuple[str, int]:
    """Byte-compares two telemetry/transition/cycle logs.

    Returns ("IDENTICAL", -1) or ("DIVERGENT", first divergent cycle).
    """
    try:
        fa = open(log_a, "rb")
        fb = open(log_b, "rb")
    except OSError as exc:
        raise FileNotFoundError(str(exc)) from exc
    with fa, fb:
        for line_a, line_b in zip(fa, fb):
            if line_a != line_b:
                return "DIVERGENT", _cycle_of(line_a) or _cycle_of(line_b)
        extra_a = fa.readline()
        extra_b = fb.readline()
        if extra_a or extra_b:
            return "DIVERGENT", _cycle_of(extra_a or extra_b)
    return "IDENTICAL", -1


def _cycle_of(line: bytes) -> int:
    try:
        head = line.split(b",", 1)[0]
        if head.startswith(b"{"):
            return int(json.loads(line).get("cycle", 0))
        return int(head)
    except Exception:
        return 0
