"""Consistency-based discrete mode estimation per component.

Each component is a small state machine: nominal transitions fire on
commands, fault transitions fire spontaneously. The estimator carries a set
of candidate mode assignments; each frame it advances them through the
commanded transitions, prunes the ones whose per-mode observation
predicates are contradicted by telemetry, and, when nothing survives,
re-expands by inserting fault transitions (fewest total faults first) until
a candidate explains the frame or the per-step fault budget runs out.
Candidate order is always (fault_count, lexicographic modes), so results
are deterministic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .expressions import UNKNOWN, Expr, parse_expression
from .simulation import Command, SensorFrame


class ModeEstimationError(Exception):
    pass


class ExhaustedError(ModeEstimationError):
    """No candidate within the fault budget explains the observations."""


@dataclass
class ComponentModel:
    id: str
    modes: list[str]
    nominal: dict[tuple[str, str], str]  # (mode, command value) -> next mode
    faults: dict[str, list[str]]  # mode -> spontaneous fault destinations
    observations: dict[str, Expr]  # mode -> predicate over telemetry

    def __post_init__(self):
        mode_set = set(self.modes)
        for (mode, _), dest in self.nominal.items():
            if mode not in mode_set or dest not in mode_set:
                raise ModeEstimationError(f"{self.id}: transition references unknown mode")
        for mode, dests in self.faults.items():
            if mode not in mode_set or any(d not in mode_set for d in dests):
                raise ModeEstimationError(f"{self.id}: fault transition references unknown mode")


@dataclass
class TransitionModel:
    components: dict[str, ComponentModel]

    def __post_init__(self):
        if not self.components:
            raise ModeEstimationError("transition model has no components")
        self.component_ids = sorted(self.components)


Assignment = tuple[str, ...]  # mode per component, in component_ids order


@dataclass(frozen=True)
class Candidate:
    assignment: Assignment
    fault_count: int


@dataclass
class CandidateSet:
    candidates: list[Candidate]
    cap: int = 64

    def best(self) -> Candidate:
        if not self.candidates:
            raise ModeEstimationError("empty candidate set")
        return self.candidates[0]


class _FrameContext:
    """Expression context over a frame; node/var references are unavailable."""

    def __init__(self, frame: SensorFrame):
        self.frame = frame

    def lookup(self, param: str):
        if param not in self.frame.values or self.frame.staleness.get(param, False):
            return UNKNOWN
        return self.frame.values[param]

    def now_s(self) -> float:
        return self.frame.sim_time_s

    def node_state(self, node_id: str) -> str:
        return "inactive"

    def variable(self, name: str):
        return UNKNOWN


def init(model: TransitionModel, initial_modes: dict[str, str | None]) -> CandidateSet:
    """One zero-fault candidate; unknown components fan out over their modes."""
    per_component: list[list[str]] = []
    for cid in model.component_ids:
        comp = model.components[cid]
        given = initial_modes.get(cid)
        if given is None:
            per_component.append(list(comp.modes))
        elif given in comp.modes:
            per_component.append([given])
        else:
            raise ModeEstimationError(f"invalid initial mode {given!r} for {cid}")
    candidates = [
        Candidate(tuple(combo), 0) for combo in itertools.product(*per_component)
    ]
    return CandidateSet(_ordered(candidates), cap=64)


def _ordered(candidates: list[Candidate]) -> list[Candidate]:
    return sorted(candidates, key=lambda c: (c.fault_count, c.assignment))


def _dedupe(candidates: list[Candidate]) -> list[Candidate]:
    best: dict[Assignment, int] = {}
    for c in candidates:
        if c.assignment not in best or c.fault_count < best[c.assignment]:
            best[c.assignment] = c.fault_count
    return [Candidate(a, n) for a, n in best.items()]


def _advance_nominal(model: TransitionModel, candidate: Candidate, commands: list[Command]) -> Candidate:
    modes = list(candidate.assignment)
    for cmd in commands:
        if cmd.target not in model.components:
            continue
        idx = model.component_ids.index(cmd.target)
        comp = model.components[cmd.target]
        dest = comp.nominal.get((modes[idx], cmd.value))
        if dest is not None:
            modes[idx] = dest
        # A command with no transition from the current mode is ignored there
        # (stuck modes absorb commands).
    return Candidate(tuple(modes), candidate.fault_count)


def _consistent(model: TransitionModel, candidate: Candidate, frame: SensorFrame) -> bool:
    ctx = _FrameContext(frame)
    for cid, mode in zip(model.component_ids, candidate.assignment):
        predicate = model.components[cid].observations.get(mode)
        if predicate is None:
            continue
        if predicate.eval(ctx) is False:
            return False
    return True


def _expand_one_fault(model: TransitionModel, candidates: list[Candidate]) -> list[Candidate]:
    expanded: list[Candidate] = []
    for cand in sorted(candidates, key=lambda c: (c.fault_count, c.assignment)):
        for idx, cid in enumerate(model.component_ids):
            comp = model.components[cid]
            for dest in comp.faults.get(cand.assignment[idx], []):
                modes = list(cand.assignment)
                modes[idx] = dest
                expanded.append(Candidate(tuple(modes), cand.fault_count + 1))
    return _dedupe(expanded)


def advance(
    model: TransitionModel,
    candidates: CandidateSet,
    commands: list[Command],
    frame: SensorFrame,
    fault_budget: int = 2,
) -> CandidateSet:
    advanced = _dedupe([_advance_nominal(model, c, commands) for c in candidates.candidates])
    surviving = [c for c in advanced if _consistent(model, c, frame)]
    if not surviving:
        frontier = advanced
        for _ in range(fault_budget):
            frontier = _expand_one_fault(model, frontier)
            if not frontier:
                break
            surviving = [c for c in frontier if _consistent(model, c, frame)]
            if surviving:
                break
        else:
            surviving = []
    if not surviving:
        raise ExhaustedError(
            f"no candidate within {fault_budget} added faults explains frame {frame.cycle}"
        )
    ordered = _ordered(_dedupe(surviving))
    return CandidateSet(ordered[: candidates.cap], cap=candidates.cap)


def best_diagnosis(candidates: CandidateSet) -> Candidate:
    return candidates.best()


# -- model file parsing --------------------------------------------------------
#
# Per-component sections:
#   [component <id>]
#   modes: m1 m2 ...
#   nominal: <mode> --<command value>--> <mode>
#   fault: <mode> -> <mode>
#   observe <mode>: <expression>


def parse_transition_model(text: str, path: str = "") -> TransitionModel:
    from .simulation import ModelFileError

    components: dict[str, ComponentModel] = {}
    current: dict | None = None

    def commit():
        if current is None:
            return
        comp = ComponentModel(
            id=current["id"],
            modes=current["modes"],
            nominal=current["nominal"],
            faults=current["faults"],
            observations=current["observations"],
        )
        components[comp.id] = comp

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[component") and line.endswith("]"):
            commit()
            cid = line[len("[component"):-1].strip()
            if not cid:
                raise ModelFileError("component section needs an id", path, lineno)
            current = {"id": cid, "modes": [], "nominal": {}, "faults": {}, "observations": {}}
            continue
        if current is None:
            raise ModelFileError("content before any [component] section", path, lineno)
        if line.startswith("modes:"):
            current["modes"] = line[len("modes:"):].split()
        elif line.startswith("nominal:"):
            body = line[len("nominal:"):].strip()
            try:
                src, rest = body.split("--", 1)
                cmd_value, dest = rest.split("-->", 1)
            except ValueError as exc:
                raise ModelFileError("nominal line must be: mode --CMD--> mode", path, lineno) from exc
            current["nominal"][(src.strip(), cmd_value.strip())] = dest.strip()
        elif line.startswith("fault:"):
            body = line[len("fault:"):].strip()
            try:
                src, dest = [p.strip() for p in body.split("->", 1)]
            except ValueError as exc:
                raise ModelFileError("fault line must be: mode -> mode", path, lineno) from exc
            current["faults"].setdefault(src, []).append(dest)
        elif line.startswith("observe "):
            head, _, expr_text = line.partition(":")
            mode = head[len("observe "):].strip()
            current["observations"][mode] = parse_expression(expr_text.strip(), lineno)
        else:
            raise ModelFileError(f"unrecognized line {line!r}", path, lineno)
    commit()
    try:
        return TransitionModel(components)
    except ModeEstimationError as exc:
        raise ModelFileError(str(exc), path) from exc


def load_transition_model(path: str) -> TransitionModel:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_transition_model(fh.read(), path)
