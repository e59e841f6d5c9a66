"""The autonomy control loop: wires every component over the software bus.

Per frame, in fixed order: anomaly scoring, limit-test evaluation, debounced
isolation, impact reasoning on fresh confirmations, mode-estimator advance,
plan-executive macro step, then the replan trigger check. Every stage
publishes its output on the bus; the orchestrator reads stage results and
converts confirmed faults plus impacts into an amended scheduling problem.

A failed stage degrades that component for the cycle instead of blocking
the loop. Anomaly detection and mode estimation are advisory: their outputs
never feed the replanner or the isolation chain.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field

from . import anomaly as anomaly_mod
from . import impacts as impacts_mod
from . import modes as modes_mod
from .bus import SoftwareBus
from .isolation import DebouncedDetector, DMatrix, TestResults, Verdict
from .plans import Executive, NodeTransition, PlanTree
from .scenario import Scenario, VsmConfig
from .scheduling import (
    LoadSpec,
    Schedule,
    SchedulingProblem,
    build_problem,
    solve,
    to_plan,
    validate,
)
from .simulation import Command, SensorFrame, SimState

NONE = "NONE"
PERIODIC = "PERIODIC"
EVENT = "EVENT"


@dataclass(frozen=True)
class FaultEvent:
    cycle: int
    sim_time_s: float
    modes: tuple[str, ...]
    exact: bool
    multi_fault_diagnoses: tuple[tuple[str, ...], ...] = ()
    inconsistent: bool = False


@dataclass(frozen=True)
class AnomalyEvent:
    cycle: int
    verdict: str
    distance: float
    empirical_quantile: float


@dataclass(frozen=True)
class PlanRequest:
    cycle: int
    reason: str  # PERIODIC | EVENT
    detail: str = ""


@dataclass(frozen=True)
class OperatorAction:
    kind: str  # inject | approve | hold
    payload: dict


@dataclass
class MissionLedger:
    frames: int = 0
    faults_confirmed: int = 0
    replans_periodic: int = 0
    replans_event: int = 0
    commands_issued: int = 0
    operator_actions: int = 0
    anomalies: int = 0
    validator_violations: int = 0
    estimator_exhausted: int = 0
    unresolved_inconsistent: int = 0


@dataclass
class PendingApproval:
    plan_id: str
    tree: PlanTree
    schedule: Schedule
    problem: SchedulingProblem
    proposed_at_s: float
    reason: str


@dataclass
class CycleReport:
    cycle: int
    sim_time_s: float
    commands: list[Command]
    transitions: list[NodeTransition]
    fault_event: FaultEvent | None
    anomaly_event: AnomalyEvent | None
    estimator_best: tuple[tuple[str, ...], int] | None
    replan: str
    replan_committed: bool
    plan_id: str
    degraded: list[str]
    diagnoser_disagreement: bool
    timing_ms: dict[str, float] = field(default_factory=dict)


class Vsm:
    """Single driver of the bus cycle; owns all autonomy components."""

    def __init__(self, scenario: Scenario, sim: SimState):
        self.scenario = scenario
        self.config: VsmConfig = scenario.vsm
        self.sim = sim
        self.dmatrix: DMatrix = scenario.dmatrix
        self.graph = scenario.graph
        self.detector = DebouncedDetector(self.dmatrix, self.config.fault_debounce_frames)
        self.executive = Executive()
        self.ledger = MissionLedger()
        self.pending_approval: PendingApproval | None = None
        self.operator_attached = False
        self.plan_counter = 0
        self.solver_stats: list[dict] = []
        self.last_confirmed: frozenset[str] = frozenset()
        self.current_schedule: Schedule | None = None
        self.current_problem: SchedulingProblem | None = None
        self._failure_replan_for: str = ""  # plan id already replanned after failing
        self.active_amendments: list[str] = []
        self.forced_off: set[str] = set()
        self.degraded_draw: dict[str, float] = {}
        self.last_fault_event: FaultEvent | None = None
        self.last_impacts: impacts_mod.ImpactReport | None = None

        self.load_specs = [
            LoadSpec(l.id, l.bus_id, l.power_draw_w) for l in scenario.sim_model.loads
        ]
        # Mode changes are always counted from mission start, so replans with a
        # frozen prefix must keep the original initial modes.
        self.mission_initial_modes = {l.id: l.mode for l in scenario.sim_model.loads}

        self.cluster_set = None
        self.calibration = None
        if scenario.anomaly_training_path and not self.config.disable_anomaly:
            self._train_anomaly()

        self.estimator_model = scenario.transition_model
        self.candidates = None
        if self.estimator_model is not None and not self.config.disable_mode_estimation:
            initial = dict(scenario.initial_component_modes)
            for comp_id in self.estimator_model.component_ids:
                initial.setdefault(comp_id, None)
            self.candidates = modes_mod.init(self.estimator_model, initial)
            self.candidates.cap = self.config.candidate_cap

        self._pending_commands: list[Command] = []
        self._build_bus()

    # -- setup ---------------------------------------------------------------

    def _train_anomaly(self) -> None:
        import numpy as np

        params = self.scenario.anomaly_parameters
        rows = []
        with open(self.scenario.anomaly_training_path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            col = {p: i for i, p in enumerate(header)}
            missing = [p for p in params if p not in col]
            if missing:
                raise ValueError(f"training data lacks parameters {missing[:3]}")
            for line in fh:
                fields = line.strip().split(",")
                rows.append([float(fields[col[p]]) for p in params])
        data = np.array(rows)
        split = int(len(data) * (1.0 - self.scenario.anomaly_holdout_fraction))
        self.cluster_set = anomaly_mod.train(
            data[:split], self.scenario.anomaly_epsilon, parameter_ids=list(params)
        )
        self.calibration = anomaly_mod.calibrate(
            self.cluster_set, data[split:], self.scenario.anomaly_quantile
        )

    def _build_bus(self) -> None:
        bus = SoftwareBus()
        bus.register_topic("telemetry.frames", SensorFrame)
        bus.register_topic("tests.results", TestResults)
        bus.register_topic("fault.events", FaultEvent)
        bus.register_topic("impact.reports", impacts_mod.ImpactReport)
        bus.register_topic("anomaly.events", AnomalyEvent)
        bus.register_topic("plan.requests", PlanRequest)
        bus.register_topic("plan.trees", PlanTree)
        bus.register_topic("plan.transitions", NodeTransition)
        bus.register_topic("commands", Command)
        bus.register_topic("operator.actions", OperatorAction)
        self.bus = bus

    # -- planning ---------------------------------------------------------------

    def initial_plan(self) -> None:
        problem = self._build_current_problem(elapsed_s=0.0)
        self._solve_and_load(problem, reason="INITIAL", commit=True)

    def _build_current_problem(self, elapsed_s: float) -> SchedulingProblem:
        cfg = self.config
        slots = cfg.horizon_s // cfg.slot_s
        frozen_slots = min(slots, int(elapsed_s // cfg.slot_s) + (1 if elapsed_s > 0 else 0))
        frozen: dict[str, list[int]] = {}
        if self.current_schedule is not None and frozen_slots > 0:
            frozen = {
                lid: self.current_schedule.modes[lid][:frozen_slots]
                for lid in self.current_schedule.modes
            }
        else:
            frozen_slots = 0
        loads = [
            LoadSpec(
                spec.id,
                spec.bus_id,
                spec.power_draw_w * self.degraded_draw.get(spec.id, 1.0),
            )
            for spec in self.load_specs
        ]
        constraints = self.scenario.constraints
        if self.forced_off:
            import dataclasses

            constraints = dataclasses.replace(
                constraints,
                duty=[d for d in constraints.duty if d.load_id not in self.forced_off],
                max_off=[m for m in constraints.max_off if m.load_id not in self.forced_off],
                min_on_run=[m for m in constraints.min_on_run if m.load_id not in self.forced_off],
                sync=[s for s in constraints.sync
                      if s.a not in self.forced_off and s.b not in self.forced_off],
                mutex=[m for m in constraints.mutex
                       if m.a not in self.forced_off and m.b not in self.forced_off],
            )
        return build_problem(
            loads=loads,
            power=self.scenario.sim_model.power,
            constraints=constraints,
            horizon_s=cfg.horizon_s,
            slot_s=cfg.slot_s,
            initial_modes=dict(self.mission_initial_modes),
            soc_wh=self.sim.soc_wh,
            frozen_slots=frozen_slots,
            frozen=frozen,
            forced_off=set(self.forced_off),
            amendments=list(self.active_amendments),
        )

    def respond_to_fault(
        self,
        group_modes: frozenset[str],
        impacts: impacts_mod.ImpactReport | None,
        elapsed_s: float,
    ) -> SchedulingProblem:
        """Amend the scheduling problem for a confirmed fault group."""
        load_ids = {l.id for l in self.scenario.sim_model.loads}
        for mode_id in sorted(group_modes):
            meta = self.dmatrix.metadata(mode_id)
            component = str(meta.get("component", mode_id.rsplit(".", 1)[0]))
            effect = str(meta.get("sched_effect", "none"))
            if effect == "exclude" and component in load_ids:
                if component not in self.forced_off:
                    self.forced_off.add(component)
                    self.active_amendments.append(f"exclude {component} ({mode_id})")
            elif effect == "degraded" and component in load_ids:
                multiplier = float(meta.get("draw_multiplier", 1.0))
                if self.degraded_draw.get(component) != multiplier:
                    self.degraded_draw[component] = multiplier
                    self.active_amendments.append(
                        f"draw x{multiplier:g} {component} ({mode_id})"
                    )
            elif effect == "bus_out":
                for spec in self.scenario.sim_model.loads:
                    if spec.bus_id == component and spec.id not in self.forced_off:
                        self.forced_off.add(spec.id)
                        self.active_amendments.append(f"exclude {spec.id} ({mode_id})")
            else:
                self.active_amendments.append(f"annotate {mode_id}")
        if impacts is not None:
            for component, _function in sorted(impacts.lost):
                if component in load_ids and component not in self.forced_off:
                    self.forced_off.add(component)
                    self.active_amendments.append(f"exclude {component} (lost function)")
        return self._build_current_problem(elapsed_s)

    def _solve_and_load(self, problem: SchedulingProblem, reason: str, commit: bool) -> bool:
        result = solve(problem, self.config.solver_budget_ms)
        self.solver_stats.append(
            {
                "reason": reason,
                "status": result.status.value,
                "nodes": result.nodes_explored,
                "objective": (result.schedule.objective_value if result.schedule else None),
                "mode_changes": (result.schedule.mode_changes if result.schedule else None),
            }
        )
        if result.schedule is None:
            return False
        report = validate(result.schedule, problem)
        if not report.ok:
            self.ledger.validator_violations += len(report.violations)
        tree = to_plan(result.schedule, problem, verify_timeout_s=self.config.verify_timeout_s)
        self.plan_counter += 1
        plan_id = f"plan-{self.plan_counter:04d}"
        if commit:
            self._commit_plan(plan_id, tree, result.schedule, problem)
        else:
            self.pending_approval = PendingApproval(
                plan_id, tree, result.schedule, problem, self.sim.sim_time_s, reason
            )
        self.bus.publish("plan.trees", tree)
        return True

    def _commit_plan(self, plan_id: str, tree: PlanTree, schedule: Schedule,
                     problem: SchedulingProblem) -> None:
        self.executive.load_plan(tree)
        self.current_schedule = schedule
        self.current_problem = problem
        self.current_plan_id = plan_id
        self.pending_approval = None

    # -- operator actions ---------------------------------------------------------

    def apply_operator_action(self, action: OperatorAction) -> None:
        self.ledger.operator_actions += 1
        self.bus.publish("operator.actions", action)
        if action.kind == "inject":
            from .simulation import FaultInjection

            self.sim.inject_fault(
                FaultInjection(
                    action.payload["fault_mode_id"],
                    self.sim.sim_time_s,
                    action.payload.get("parameters", {}),
                )
            )
        elif action.kind in ("approve", "hold"):
            pending = self.pending_approval
            if pending is None or pending.plan_id != action.payload.get("plan_id"):
                return
            if action.kind == "approve":
                self._commit_plan(pending.plan_id, pending.tree, pending.schedule, pending.problem)
            else:
                self.pending_approval = None

    # -- per-frame cycle -----------------------------------------------------------

    def replan_trigger(self, sim_time_s: float, fault_event: FaultEvent | None,
                       plan_failed: bool) -> str:
        event = plan_failed
        if fault_event is not None:
            scheduled = {l.id for l in self.scenario.sim_model.loads}
            buses = {b.id for b in self.scenario.sim_model.power.buses}
            for mode_id in fault_event.modes:
                component = str(
                    self.dmatrix.metadata(mode_id).get("component", mode_id.rsplit(".", 1)[0])
                )
                if component in scheduled or component in buses:
                    event = True
        if event:
            return EVENT
        period = self.config.replan_period_s
        if sim_time_s > 0 and (sim_time_s % period) == 0:
            return PERIODIC
        return NONE

    def run_cycle(self, frame: SensorFrame) -> CycleReport:
        cfg = self.config
        degraded: list[str] = []
        timing: dict[str, float] = {}
        self.ledger.frames += 1
        self.bus.publish("telemetry.frames", frame)

        anomaly_event = None
        if self.cluster_set is not None and not cfg.disable_anomaly:
            t0 = _time.perf_counter()
            try:
                vector = [frame.values[p] for p in self.cluster_set.parameter_ids]
                result = anomaly_mod.score(self.cluster_set, self.calibration, vector)
                anomaly_event = AnomalyEvent(
                    frame.cycle, result.verdict, result.distance, result.empirical_quantile
                )
                if result.verdict == anomaly_mod.ANOMALY:
                    self.ledger.anomalies += 1
                self.bus.publish("anomaly.events", anomaly_event)
            except Exception:
                degraded.append("anomaly")
            timing["anomaly"] = (_time.perf_counter() - t0) * 1e3

        t0 = _time.perf_counter()
        fault_event = None
        impacts_report = None
        try:
            _raw, confirmed = self.detector.update(frame)
            self.bus.publish("tests.results", confirmed)
            isolation = self.dmatrix.isolate(confirmed)
            confirmed_modes: frozenset[str] = frozenset()
            if isolation.verdict == Verdict.GROUP:
                confirmed_modes = isolation.group.modes
            if isolation.verdict == Verdict.INCONSISTENT:
                diagnoses = self.dmatrix.isolate_multi(confirmed, cfg.multi_fault_max)
                if not diagnoses:
                    self.ledger.unresolved_inconsistent += 1
                confirmed_modes = frozenset().union(*diagnoses) if diagnoses else frozenset()
                if confirmed_modes != self.last_confirmed:
                    fault_event = FaultEvent(
                        frame.cycle,
                        frame.sim_time_s,
                        tuple(sorted(confirmed_modes)),
                        exact=False,
                        multi_fault_diagnoses=tuple(
                            tuple(sorted(d)) for d in sorted(diagnoses, key=sorted)
                        ),
                        inconsistent=True,
                    )
            elif confirmed_modes != self.last_confirmed and confirmed_modes:
                fault_event = FaultEvent(
                    frame.cycle,
                    frame.sim_time_s,
                    tuple(sorted(confirmed_modes)),
                    exact=isolation.group.exact if isolation.group else False,
                )
            self.last_confirmed = confirmed_modes
        except Exception:
            degraded.append("isolation")
        timing["isolation"] = (_time.perf_counter() - t0) * 1e3

        if fault_event is not None:
            self.ledger.faults_confirmed += 1
            self.last_fault_event = fault_event
            self.bus.publish("fault.events", fault_event)
            if self.graph is not None and fault_event.modes:
                t0 = _time.perf_counter()
                try:
                    components = {
                        str(self.dmatrix.metadata(m).get("component", m.rsplit(".", 1)[0]))
                        for m in fault_event.modes
                    }
                    failed = components & self.graph.nodes
                    if failed:
                        impacts_report = impacts_mod.impact_report(self.graph, failed)
                        self.last_impacts = impacts_report
                        self.bus.publish("impact.reports", impacts_report)
                except Exception:
                    degraded.append("impacts")
                timing["impacts"] = (_time.perf_counter() - t0) * 1e3

        estimator_best = None
        disagreement = False
        if self.candidates is not None and not cfg.disable_mode_estimation:
            t0 = _time.perf_counter()
            try:
                self.candidates = modes_mod.advance(
                    self.estimator_model,
                    self.candidates,
                    self._pending_commands,
                    frame,
                    cfg.estimator_fault_budget,
                )
                best = modes_mod.best_diagnosis(self.candidates)
                estimator_best = (best.assignment, best.fault_count)
                disagreement = self._check_disagreement(best)
            except modes_mod.ExhaustedError:
                self.ledger.estimator_exhausted += 1
                degraded.append("mode-estimation")
            except Exception:
                degraded.append("mode-estimation")
            timing["estimator"] = (_time.perf_counter() - t0) * 1e3

        t0 = _time.perf_counter()
        commands: list[Command] = []
        transitions: list[NodeTransition] = []
        try:
            commands, transitions = self.executive.macro_step(frame, frame.sim_time_s)
            for cmd in commands:
                self.bus.publish("commands", cmd)
            for tr in transitions:
                self.bus.publish("plan.transitions", tr)
            self.ledger.commands_issued += len(commands)
        except Exception:
            degraded.append("executive")
        timing["executive"] = (_time.perf_counter() - t0) * 1e3
        self._pending_commands = commands

        # A failed plan triggers one replan per plan instance, and no new
        # replans are generated while a proposal awaits the operator (it will
        # commit, be approved, or be held first).
        plan_failed = (
            self.executive.root_state() == "FAILED"
            and self._failure_replan_for != getattr(self, "current_plan_id", "")
        )
        replan = self.replan_trigger(frame.sim_time_s, fault_event, plan_failed)
        if self.pending_approval is not None:
            replan = NONE
        replan_committed = False
        if replan != NONE:
            if plan_failed:
                self._failure_replan_for = getattr(self, "current_plan_id", "")
            detail = "plan failure" if plan_failed else (
                ",".join(fault_event.modes) if fault_event else "cadence"
            )
            self.bus.publish("plan.requests", PlanRequest(frame.cycle, replan, detail))
            t0 = _time.perf_counter()
            if replan == EVENT:
                self.ledger.replans_event += 1
                problem = self.respond_to_fault(
                    frozenset(fault_event.modes) if fault_event else frozenset(),
                    impacts_report,
                    elapsed_s=frame.sim_time_s,
                )
                commit = not self.operator_attached
                solved = self._solve_and_load(problem, EVENT, commit=commit)
                replan_committed = solved and commit
            else:
                self.ledger.replans_periodic += 1
                problem = self._build_current_problem(elapsed_s=frame.sim_time_s)
                replan_committed = self._solve_and_load(problem, PERIODIC, commit=True)
            timing["solver"] = (_time.perf_counter() - t0) * 1e3

        # Unanswered proposals auto-commit after the approval timeout.
        if (
            self.pending_approval is not None
            and frame.sim_time_s - self.pending_approval.proposed_at_s >= cfg.approval_timeout_s
        ):
            p = self.pending_approval
            self._commit_plan(p.plan_id, p.tree, p.schedule, p.problem)
            replan_committed = True

        self.bus.drain_cycle()
        return CycleReport(
            cycle=frame.cycle,
            sim_time_s=frame.sim_time_s,
            commands=commands,
            transitions=transitions,
            fault_event=fault_event,
            anomaly_event=anomaly_event,
            estimator_best=estimator_best,
            replan=replan,
            replan_committed=replan_committed,
            plan_id=getattr(self, "current_plan_id", ""),
            degraded=degraded,
            diagnoser_disagreement=disagreement,
            timing_ms=timing,
        )

    def _check_disagreement(self, best) -> bool:
        """Advisory flag: both diagnosers blame faults on disjoint components."""
        if best.fault_count == 0 or not self.last_confirmed:
            return False
        estimator_components = set()
        for cid, mode in zip(self.estimator_model.component_ids, best.assignment):
            comp = self.estimator_model.components[cid]
            fault_destinations = {d for dests in comp.faults.values() for d in dests}
            if mode in fault_destinations:
                estimator_components.add(cid)
        isolation_components = {
            str(self.dmatrix.metadata(m).get("component", m.rsplit(".", 1)[0]))
            for m in self.last_confirmed
        }
        return bool(estimator_components) and not (
            estimator_components & isolation_components
        )

    def next_commands(self) -> list[Command]:
        return list(self._pending_commands)
