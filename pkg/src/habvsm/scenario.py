"""Scenario files: the top-level run description tying all models together.

A scenario names the simulation model, diagnosis model (D-matrix plus
component graph), transition models, anomaly training data and parameter
selection, the scheduling constraint set, controller configuration, and any
scripted fault injections. Parsing cross-validates every reference: unknown
loads, parameters, or fault ids are reported with their location.
"""

from __future__ import annotations

import fnmatch
import os
from dataclasses import dataclass, field

from .impacts import ComponentGraph, parse_graph_lines
from .isolation import DMatrix, load_dmatrix
from .modes import TransitionModel, load_transition_model
from .scheduling import (
    BusCapacityConstraint,
    ConstraintSet,
    DutyConstraint,
    MaxOffConstraint,
    MinOnRunConstraint,
    MutexConstraint,
    SyncConstraint,
)
from .simulation import FaultInjection, ModelFileError, SimModel, load_sim_model


class ScenarioError(Exception):
    def __init__(self, message: str, path: str = "", line: int = 0):
        loc = f"{path}:{line}: " if path else ""
        super().__init__(f"{loc}{message}")


@dataclass
class VsmConfig:
    replan_period_s: int = 300
    fault_debounce_frames: int = 3
    solver_budget_ms: int = 150
    approval_timeout_s: float = 60.0
    horizon_s: int = 7200
    slot_s: int = 60
    multi_fault_max: int = 3
    estimator_fault_budget: int = 2
    candidate_cap: int = 64
    verify_timeout_s: int = 45
    disable_anomaly: bool = False
    disable_mode_estimation: bool = False

    def __post_init__(self):
        if self.replan_period_s <= 0:
            raise ScenarioError("replan_period_s must be > 0")


@dataclass
class Scenario:
    name: str
    base_dir: str
    duration_s: float
    frame_dt_s: float
    seed: int
    sim_model: SimModel
    dmatrix: DMatrix
    graph: ComponentGraph | None
    transition_model: TransitionModel | None
    initial_component_modes: dict[str, str]
    anomaly_training_path: str | None
    anomaly_parameters: list[str]
    anomaly_epsilon: float
    anomaly_quantile: float
    anomaly_holdout_fraction: float
    constraints: ConstraintSet
    vsm: VsmConfig
    injections: list[FaultInjection] = field(default_factory=list)


_TRUTHY = {"1", "true", "yes", "on"}


def parse_scenario(path: str, seed_override: int | None = None,
                   duration_override: float | None = None) -> Scenario:
    base_dir = os.path.dirname(os.path.abspath(path))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}", path)

    scalars: dict[str, str] = {}
    vsm_kv: dict[str, str] = {}
    constraint_lines: list[tuple[int, str]] = []
    anomaly_param_lines: list[str] = []
    injection_lines: list[tuple[int, str]] = []
    initial_mode_lines: list[tuple[int, str]] = []
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in ("scenario", "vsm", "constraints", "anomaly_parameters",
                               "injections", "initial_modes"):
                raise ScenarioError(f"unknown section [{section}]", path, lineno)
            continue
        if section == "scenario":
            key, sep, value = line.partition("=")
            if not sep:
                raise ScenarioError(f"expected key = value, found {line!r}", path, lineno)
            scalars[key.strip()] = value.strip()
        elif section == "vsm":
            key, sep, value = line.partition("=")
            if not sep:
                raise ScenarioError(f"expected key = value, found {line!r}", path, lineno)
            vsm_kv[key.strip()] = value.strip()
        elif section == "constraints":
            constraint_lines.append((lineno, line))
        elif section == "anomaly_parameters":
            anomaly_param_lines.append(line)
        elif section == "injections":
            injection_lines.append((lineno, line))
        elif section == "initial_modes":
            initial_mode_lines.append((lineno, line))
        else:
            raise ScenarioError("content before any section header", path, lineno)

    if not scalars:
        raise ScenarioError("empty or structureless scenario file", path)

    def require(key: str) -> str:
        if key not in scalars:
            raise ScenarioError(f"missing required key {key!r} in [scenario]", path)
        return scalars[key]

    duration_s = float(require("duration_s"))
    if duration_override is not None:
        duration_s = float(duration_override)
    if duration_s <= 0:
        raise ScenarioError("duration_s must be > 0", path)
    frame_dt_s = float(scalars.get("frame_dt_s", "1"))
    seed = int(scalars.get("seed", "0"))
    if seed_override is not None:
        seed = seed_override

    def resolve(key: str, required: bool = True) -> str | None:
        if key not in scalars:
            if required:
                raise ScenarioError(f"missing required key {key!r} in [scenario]", path)
            return None
        candidate = os.path.join(base_dir, scalars[key])
        if not os.path.exists(candidate):
            raise ScenarioError(f"{key} file not found: {candidate}", path)
        return candidate

    try:
        sim_model = load_sim_model(resolve("sim_model"))
        dmatrix, graph_lines = load_dmatrix(resolve("diagnosis_model"))
    except ModelFileError as exc:
        raise ScenarioError(str(exc), path) from exc
    graph = parse_graph_lines(graph_lines, scalars.get("diagnosis_model", "")) if graph_lines else None

    transition_model: TransitionModel | None = None
    tm_path = resolve("transition_model", required=False)
    if tm_path:
        transition_model = load_transition_model(tm_path)

    anomaly_training_path = resolve("anomaly_training", required=False)

    parameter_ids = set(sim_model.parameter_ids())
    fault_ids = set(sim_model.fault_mode_ids()) | {
        f"{s.id}.stale" for s in sim_model.aux_sensors
    }

    # Cross-checks: every test parameter must exist in the frame dictionary.
    for test in dmatrix.tests:
        if test.parameter not in parameter_ids:
            raise ScenarioError(
                f"test {test.id!r} references unknown parameter {test.parameter!r}", path
            )
    if dmatrix.undetectable:
        raise ScenarioError(
            f"diagnosis model has undetectable modes: {sorted(dmatrix.undetectable)[:5]}", path
        )

    anomaly_parameters: list[str] = []
    for pattern in anomaly_param_lines:
        matches = sorted(fnmatch.filter(parameter_ids, pattern))
        if not matches:
            raise ScenarioError(f"anomaly parameter {pattern!r} matches nothing", path)
        anomaly_parameters.extend(m for m in matches if m not in anomaly_parameters)

    load_ids = {l.id for l in sim_model.loads}
    bus_ids = {b.id for b in sim_model.power.buses}
    constraints = ConstraintSet()
    for lineno, line in constraint_lines:
        parts = line.split()
        kind = parts[0]
        try:
            if kind == "duty":
                kv = dict(p.split("=", 1) for p in parts[2:])
                constraints.duty.append(
                    DutyConstraint(parts[1], int(kv["min_on_s"]), int(kv["period_s"]))
                )
            elif kind == "sync":
                constraints.sync.append(SyncConstraint(parts[1], parts[2]))
            elif kind == "mutex":
                constraints.mutex.append(MutexConstraint(parts[1], parts[2]))
            elif kind == "max_off":
                kv = dict(p.split("=", 1) for p in parts[2:])
                constraints.max_off.append(MaxOffConstraint(parts[1], int(kv["max_off_s"])))
            elif kind == "min_on_run":
                kv = dict(p.split("=", 1) for p in parts[2:])
                constraints.min_on_run.append(MinOnRunConstraint(parts[1], int(kv["min_run_s"])))
            elif kind == "bus_capacity":
                constraints.bus_capacity.append(BusCapacityConstraint(parts[1], float(parts[2])))
            else:
                raise ScenarioError(f"unknown constraint kind {kind!r}", path, lineno)
        except (KeyError, ValueError, IndexError) as exc:
            raise ScenarioError(f"malformed constraint: {exc}", path, lineno) from exc

    for load_ref in (
        [d.load_id for d in constraints.duty]
        + [m.load_id for m in constraints.max_off]
        + [m.load_id for m in constraints.min_on_run]
        + [x for s in constraints.sync for x in (s.a, s.b)]
        + [x for m in constraints.mutex for x in (m.a, m.b)]
    ):
        if load_ref not in load_ids:
            raise ScenarioError(f"constraint references unknown load {load_ref!r}", path)
    for bc in constraints.bus_capacity:
        if bc.bus_id not in bus_ids:
            raise ScenarioError(f"constraint references unknown bus {bc.bus_id!r}", path)

    injections: list[FaultInjection] = []
    for lineno, line in injection_lines:
        parts = line.split()
        kv = dict(p.split("=", 1) for p in parts[1:])
        if "at" not in kv:
            raise ScenarioError("injection needs at=<seconds>", path, lineno)
        fid = parts[0]
        if fid not in fault_ids:
            raise ScenarioError(f"injection references unknown fault {fid!r}", path, lineno)
        at = float(kv.pop("at"))
        injections.append(FaultInjection(fid, at, {k: float(v) for k, v in kv.items()}))
    for inj in sim_model.injections:
        if inj.fault_mode_id not in fault_ids:
            raise ScenarioError(
                f"sim model injection references unknown fault {inj.fault_mode_id!r}", path
            )

    initial_component_modes: dict[str, str] = {}
    for lineno, line in initial_mode_lines:
        parts = line.split()
        if len(parts) != 2:
            raise ScenarioError("initial mode line must be: component mode", path, lineno)
        initial_component_modes[parts[0]] = parts[1]
    if transition_model is not None:
        for cid, mode in initial_component_modes.items():
            if cid not in transition_model.components:
                raise ScenarioError(f"initial mode for unknown component {cid!r}", path)
            if mode not in transition_model.components[cid].modes:
                raise ScenarioError(f"invalid initial mode {mode!r} for {cid!r}", path)

    vsm_fields = {}
    for key, value in vsm_kv.items():
        if key in ("approval_timeout_s",):
            vsm_fields[key] = float(value)
        elif key in ("disable_anomaly", "disable_mode_estimation"):
            vsm_fields[key] = value.lower() in _TRUTHY
        else:
            vsm_fields[key] = int(value)
    vsm = VsmConfig(**vsm_fields)
    if vsm.horizon_s % vsm.slot_s != 0:
        raise ScenarioError("vsm horizon_s must be divisible by slot_s", path)
    if int(vsm.replan_period_s) % max(int(frame_dt_s), 1) != 0:
        raise ScenarioError("replan_period_s must be divisible by the frame period", path)

    return Scenario(
        name=scalars.get("name", os.path.basename(path)),
        base_dir=base_dir,
        duration_s=duration_s,
        frame_dt_s=frame_dt_s,
        seed=seed,
        sim_model=sim_model,
        dmatrix=dmatrix,
        graph=graph,
        transition_model=transition_model,
        initial_component_modes=initial_component_modes,
        anomaly_training_path=anomaly_training_path,
        anomaly_parameters=anomaly_parameters,
        anomaly_epsilon=float(scalars.get("anomaly_epsilon", "2.5")),
        anomaly_quantile=float(scalars.get("anomaly_quantile", "0.99")),
        anomaly_holdout_fraction=float(scalars.get("anomaly_holdout_fraction", "0.25")),
        constraints=constraints,
        vsm=vsm,
        injections=injections,
    )
