"""Time-slotted binary load scheduling: problem model, exact solver, validator.

The horizon is divided into equal slots; each load is ON or OFF per slot.
Constraint semantics, shared by the solver, the independent validator, and
the test oracles:

- duty (load, min_on_s, period_s): the horizon is tiled into windows of
  period_s starting at slot 0. Every complete window must contain at least
  ceil(min_on_s/slot_s) ON slots; a partial trailing window is exempt.
- sync (a, b): equal modes in every slot.
- mutex (a, b): never both ON in a slot.
- max_off (load, max_off_s): no contiguous OFF run longer than
  floor(max_off_s/slot_s) slots anywhere in the horizon.
- min_on_run (load, min_run_s): every maximal ON run that touches neither
  horizon boundary must span at least ceil(min_run_s/slot_s) slots.
- peak: total draw of ON loads per slot is capped by the per-slot profile.
- bus capacity: per-slot draw cap over the loads of one bus.
- energy: total scheduled energy over the whole horizon is capped.
- forced_off: the load must be OFF in every non-frozen slot.

Objective: maximize the weighted count of ON slots credited toward duty
(per window, at most the window requirement counts); ties are broken by
fewer mode changes, counting the change from each load's initial mode into
slot 0. The solver is deterministic: its search budget is a node count
derived from the millisecond budget at a fixed conversion rate, so equal
inputs give equal schedules on any machine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .simulation import OFF, ON

# Deterministic budget conversion; calibrated on desktop CPython.
NODES_PER_MS = 25

_EPS = 1e-9


class SchedulingError(Exception):
    pass


@dataclass(frozen=True)
class LoadSpec:
    id: str
    bus_id: str
    power_draw_w: float
    weight: float = 1.0


@dataclass(frozen=True)
class DutyConstraint:
    load_id: str
    min_on_s: int
    period_s: int


@dataclass(frozen=True)
class SyncConstraint:
    a: str
    b: str


@dataclass(frozen=True)
class MaxOffConstraint:
    load_id: str
    max_off_s: int


@dataclass(frozen=True)
class MinOnRunConstraint:
    load_id: str
    min_run_s: int


@dataclass(frozen=True)
class MutexConstraint:
    a: str
    b: str


@dataclass(frozen=True)
class BusCapacityConstraint:
    bus_id: str
    capacity_w: float


@dataclass
class ConstraintSet:
    duty: list[DutyConstraint] = field(default_factory=list)
    sync: list[SyncConstraint] = field(default_factory=list)
    max_off: list[MaxOffConstraint] = field(default_factory=list)
    min_on_run: list[MinOnRunConstraint] = field(default_factory=list)
    mutex: list[MutexConstraint] = field(default_factory=list)
    bus_capacity: list[BusCapacityConstraint] = field(default_factory=list)

    def count(self) -> int:
        return (
            len(self.duty) + len(self.sync) + len(self.max_off)
            + len(self.min_on_run) + len(self.mutex) + len(self.bus_capacity)
        )


@dataclass
class SchedulingProblem:
    horizon_s: int
    slot_s: int
    loads: list[LoadSpec]
    constraints: ConstraintSet
    peak_power_profile: list[float]
    energy_budget_wh: float
    initial_modes: dict[str, str]
    forced_off: set[str] = field(default_factory=set)
    frozen_slots: int = 0
    frozen: dict[str, list[int]] = field(default_factory=dict)
    amendments: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.slot_s <= 0 or self.horizon_s <= 0:
            raise SchedulingError("horizon_s and slot_s must be positive")
        if self.horizon_s % self.slot_s != 0:
            raise SchedulingError("horizon_s must be divisible by slot_s")
        ids = [l.id for l in self.loads]
        if len(set(ids)) != len(ids):
            raise SchedulingError("duplicate load ids")
        known = set(ids)
        c = self.constraints
        for ref in (
            [d.load_id for d in c.duty]
            + [s.load_id for s in c.max_off]
            + [s.load_id for s in c.min_on_run]
            + [x for s in c.sync for x in (s.a, s.b)]
            + [x for s in c.mutex for x in (s.a, s.b)]
            + list(self.forced_off)
        ):
            if ref not in known:
                raise SchedulingError(f"constraint references unknown load {ref!r}")
        if len(self.peak_power_profile) != self.slots:
            raise SchedulingError("peak_power_profile length must equal slot count")
        for d in c.duty:
            if d.period_s % self.slot_s != 0:
                raise SchedulingError(f"duty period for {d.load_id} not slot-aligned")
        for load_id, modes in self.frozen.items():
            if load_id not in known or len(modes) != self.frozen_slots:
                raise SchedulingError("frozen history inconsistent")

    @property
    def slots(self) -> int:
        return self.horizon_s // self.slot_s

    def constraint_count(self) -> int:
        return self.constraints.count()

    def load(self, load_id: str) -> LoadSpec:
        for spec in self.loads:
            if spec.id == load_id:
                return spec
        raise KeyError(load_id)


@dataclass
class Schedule:
    load_ids: list[str]
    modes: dict[str, list[int]]  # 0/1 per slot
    objective_value: float
    mode_changes: int
    optimal: bool


class SolveStatus(Enum):
    OPTIMAL = "OPTIMAL"
    FEASIBLE = "FEASIBLE"  # incumbent found, search budget exhausted
    INFEASIBLE = "INFEASIBLE"  # proven by exhaustive search
    TIMEOUT = "TIMEOUT"  # budget exhausted with no incumbent


@dataclass
class SolveResult:
    status: SolveStatus
    schedule: Schedule | None
    nodes_explored: int = 0


@dataclass(frozen=True)
class Violation:
    constraint: str
    load_ids: tuple[str, ...]
    slots: tuple[int, ...]
    detail: str


@dataclass
class ConstraintReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def objective_of(problem: SchedulingProblem, modes: dict[str, list[int]]) -> tuple[float, int]:
    """Recomputes (duty credit, mode changes) for a full mode matrix."""
    T = problem.slots
    credit = 0.0
    for d in problem.constraints.duty:
        spec = problem.load(d.load_id)
        r = math.ceil(d.min_on_s / problem.slot_s)
        P = d.period_s // problem.slot_s
        row = modes[d.load_id]
        for start in range(0, T, P):
            window = row[start:min(start + P, T)]
            credit += spec.weight * min(sum(window), r)
    changes = 0
    for spec in problem.loads:
        row = modes[spec.id]
        prev = 1 if problem.initial_modes.get(spec.id, OFF) == ON else 0
        for v in row:
            if v != prev:
                changes += 1
            prev = v
    return credit, changes


# -- independent validator ----------------------------------------------------
# Deliberately plain re-derivation of every constraint; shares no logic with
# the solver.


def validate(schedule: Schedule, problem: SchedulingProblem) -> ConstraintReport:
    report = ConstraintReport()
    T = problem.slots
    modes = schedule.modes
    for spec in problem.loads:
        if spec.id not in modes or len(modes[spec.id]) != T:
            report.violations.append(
                Violation("dimensions", (spec.id,), (), "missing or wrong-length row")
            )
            return report

    for d in problem.constraints.duty:
        r = math.ceil(d.min_on_s / problem.slot_s)
        P = d.period_s // problem.slot_s
        row = modes[d.load_id]
        for start in range(0, T, P):
            end = start + P
            if end > T:
                break  # partial trailing window is exempt
            if sum(row[start:end]) < r:
                report.violations.append(
                    Violation(
                        "duty", (d.load_id,), tuple(range(start, end)),
                        f"{sum(row[start:end])} ON slots, {r} required",
                    )
                )

    for s in problem.constraints.sync:
        bad = tuple(t for t in range(T) if modes[s.a][t] != modes[s.b][t])
        if bad:
            report.violations.append(Violation("sync", (s.a, s.b), bad, "modes differ"))

    for m in problem.constraints.mutex:
        bad = tuple(t for t in range(T) if modes[m.a][t] == 1 and modes[m.b][t] == 1)
        if bad:
            report.violations.append(Violation("mutex", (m.a, m.b), bad, "both ON"))

    for mo in problem.constraints.max_off:
        limit = mo.max_off_s // problem.slot_s
        row = modes[mo.load_id]
        t = 0
        while t < T:
            if row[t] == 0:
                start = t
                while t < T and row[t] == 0:
                    t += 1
                if t - start > limit:
                    report.violations.append(
                        Violation(
                            "max_off", (mo.load_id,), tuple(range(start, t)),
                            f"OFF for {t - start} slots, limit {limit}",
                        )
                    )
            else:
                t += 1

    for mr in problem.constraints.min_on_run:
        need = math.ceil(mr.min_run_s / problem.slot_s)
        row = modes[mr.load_id]
        t = 0
        while t < T:
            if row[t] == 1:
                start = t
                while t < T and row[t] == 1:
                    t += 1
                interior = start > 0 and t < T
                if interior and t - start < need:
                    report.violations.append(
                        Violation(
                            "min_on_run", (mr.load_id,), tuple(range(start, t)),
                            f"ON for {t - start} slots, minimum {need}",
                        )
                    )
            else:
                t += 1

    draws = {spec.id: spec.power_draw_w for spec in problem.loads}
    for t in range(T):
        total = sum(draws[l] for l in modes if modes[l][t] == 1)
        if total > problem.peak_power_profile[t] + _EPS:
            report.violations.append(
                Violation(
                    "peak_power", tuple(sorted(l for l in modes if modes[l][t] == 1)),
                    (t,), f"{total:.1f} W exceeds {problem.peak_power_profile[t]:.1f} W",
                )
            )

    for bc in problem.constraints.bus_capacity:
        members = [spec.id for spec in problem.loads if spec.bus_id == bc.bus_id]
        for t in range(T):
            total = sum(draws[l] for l in members if modes[l][t] == 1)
            if total > bc.capacity_w + _EPS:
                report.violations.append(
                    Violation("bus_capacity", (bc.bus_id,), (t,),
                              f"{total:.1f} W exceeds {bc.capacity_w:.1f} W")
                )

    slot_h = problem.slot_s / 3600.0
    energy = sum(
        draws[l] * sum(modes[l]) * slot_h for l in modes
    )
    if energy > problem.energy_budget_wh + 1e-6:
        report.violations.append(
            Violation("energy", tuple(sorted(modes)), (),
                      f"{energy:.2f} Wh exceeds budget {problem.energy_budget_wh:.2f} Wh")
        )

    for load_id in sorted(problem.forced_off):
        bad = tuple(
            t for t in range(problem.frozen_slots, T) if modes[load_id][t] == 1
        )
        if bad:
            report.violations.append(
                Violation("forced_off", (load_id,), bad, "load must stay OFF")
            )

    for load_id, history in sorted(problem.frozen.items()):
        actual = modes[load_id][: problem.frozen_slots]
        if actual != list(history):
            report.violations.append(
                Violation("frozen", (load_id,), tuple(range(problem.frozen_slots)),
                          "frozen prefix was re-decided")
            )
    return report


# -- solver ---------------------------------------------------------------------


class _DutyEntry:
    __slots__ = ("load_id", "group", "r", "P", "weight", "count")

    def __init__(self, load_id: str, group: int, r: int, P: int, weight: float):
        self.load_id = load_id
        self.group = group
        self.r = r
        self.P = P
        self.weight = weight
        self.count = 0


class _RunState:
    __slots__ = ("load_id", "group", "off_limit", "min_run", "off_run", "on_run", "run_start")

    def __init__(self, load_id: str, group: int, off_limit: int | None, min_run: int | None):
        self.load_id = load_id
        self.group = group
        self.off_limit = off_limit
        self.min_run = min_run
        self.off_run = 0
        self.on_run = 0
        self.run_start = -1


class _Group:
    __slots__ = (
        "idx", "members", "draw_w", "bus_draws", "forced_off", "duty_entries",
        "run_states", "mutex_partners", "front_load",
    )

    def __init__(self, idx: int, members: list[str]):
        self.idx = idx
        self.members = members
        self.draw_w = 0.0
        self.bus_draws: dict[str, float] = {}
        self.forced_off = False
        self.duty_entries: list[_DutyEntry] = []
        self.run_states: list[_RunState] = []
        self.mutex_partners: list[int] = []
        self.front_load = False


def solve(problem: SchedulingProblem, budget_ms: int = 1000) -> SolveResult:
    solver = _Solver(problem, max(1000, int(budget_ms * NODES_PER_MS)))
    return solver.run()


class _Solver:
    def __init__(self, problem: SchedulingProblem, node_budget: int):
        self.problem = problem
        self.node_budget = node_budget
        self.T = problem.slots
        self.F = problem.frozen_slots
        self.slot_h = problem.slot_s / 3600.0
        self._build_groups()
        self._build_entries()
        self._precompute_suffixes()

    # -- construction ---------------------------------------------------

    def _build_groups(self) -> None:
        p = self.problem
        parent = {spec.id: spec.id for spec in p.loads}

        def find(x: str) -> str:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for s in p.constraints.sync:
            ra, rb = find(s.a), find(s.b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)

        roots: dict[str, list[str]] = {}
        for spec in p.loads:
            roots.setdefault(find(spec.id), []).append(spec.id)
        self.groups: list[_Group] = []
        self.group_of: dict[str, int] = {}
        for i, root in enumerate(sorted(roots)):
            group = _Group(i, sorted(roots[root]))
            for member in group.members:
                spec = p.load(member)
                group.draw_w += spec.power_draw_w
                group.bus_draws[spec.bus_id] = group.bus_draws.get(spec.bus_id, 0.0) + spec.power_draw_w
                if member in p.forced_off:
                    group.forced_off = True
                self.group_of[member] = i
            self.groups.append(group)

        for m in p.constraints.mutex:
            ga, gb = self.group_of[m.a], self.group_of[m.b]
            if ga == gb:
                self.groups[ga].forced_off = True  # synced with its own mutex partner
            else:
                self.groups[ga].mutex_partners.append(gb)
                self.groups[gb].mutex_partners.append(ga)
                # Stagger the pair: the lower-indexed group front-loads its duty.
                self.groups[min(ga, gb)].front_load = True

        self.buses = sorted({spec.bus_id for spec in p.loads})
        self.bus_index = {b: i for i, b in enumerate(self.buses)}
        self.bus_caps = [math.inf] * len(self.buses)
        for bc in p.constraints.bus_capacity:
            if bc.bus_id in self.bus_index:
                idx = self.bus_index[bc.bus_id]
                self.bus_caps[idx] = min(self.bus_caps[idx], bc.capacity_w)

    def _build_entries(self) -> None:
        p = self.problem
        self.entries: list[_DutyEntry] = []
        for d in p.constraints.duty:
            r = math.ceil(d.min_on_s / p.slot_s)
            P = d.period_s // p.slot_s
            spec = p.load(d.load_id)
            entry = _DutyEntry(d.load_id, self.group_of[d.load_id], min(r, P), P, spec.weight)
            self.entries.append(entry)
            self.groups[entry.group].duty_entries.append(entry)

        run_limits: dict[str, list[int | None]] = {}
        for mo in p.constraints.max_off:
            run_limits.setdefault(mo.load_id, [None, None])[0] = mo.max_off_s // p.slot_s
        for mr in p.constraints.min_on_run:
            run_limits.setdefault(mr.load_id, [None, None])[1] = math.ceil(mr.min_run_s / p.slot_s)
        self.run_states: list[_RunState] = []
        for load_id in sorted(run_limits):
            off_limit, min_run = run_limits[load_id]
            state = _RunState(load_id, self.group_of[load_id], off_limit, min_run)
            self.run_states.append(state)
            self.groups[state.group].run_states.append(state)

    def _precompute_suffixes(self) -> None:
        # For each duty entry: per window index, the total credit available in
        # strictly later windows (partial trailing window included for credit)
        # and the total required ON slots in strictly later complete windows.
        self.suffix_credit: list[list[float]] = []
        self.suffix_required: list[list[int]] = []
        for e in self.entries:
            n_windows = (self.T + e.P - 1) // e.P
            credit = [0.0] * (n_windows + 1)
            required = [0] * (n_windows + 1)
            for w in range(n_windows - 1, -1, -1):
                start = w * e.P
                length = min(e.P, self.T - start)
                credit[w] = credit[w + 1] + e.weight * min(e.r, length)
                complete = start + e.P <= self.T
                required[w] = required[w + 1] + (e.r if complete else 0)
            self.suffix_credit.append(credit)
            self.suffix_required.append(required)

    # -- frozen history replay -------------------------------------------

    def _replay_frozen(self) -> None:
        p = self.problem
        self.energy_used = 0.0
        self.credit = 0.0
        self.changes = 0
        self.prev_mode: dict[str, int] = {}
        for spec in p.loads:
            init = 1 if p.initial_modes.get(spec.id, OFF) == ON else 0
            self.prev_mode[spec.id] = init
        for spec in p.loads:
            history = p.frozen.get(spec.id, [])
            for t, v in enumerate(history):
                if v:
                    self.energy_used += spec.power_draw_w * self.slot_h
                if v != self.prev_mode[spec.id]:
                    self.changes += 1
                self.prev_mode[spec.id] = v
        for i, e in enumerate(self.entries):
            history = p.frozen.get(e.load_id, [])
            for t, v in enumerate(history):
                if t % e.P == 0:
                    e.count = 0
                if v:
                    if e.count < e.r:
                        self.credit += e.weight
                    e.count += 1
        for s in self.run_states:
            history = p.frozen.get(s.load_id, [])
            for t, v in enumerate(history):
                if v:
                    s.on_run = s.on_run + 1 if s.on_run else 1
                    if s.on_run == 1:
                        s.run_start = t
                    s.off_run = 0
                else:
                    s.off_run += 1
                    s.on_run = 0
                    s.run_start = -1

    # -- search -------------------------------------------------------------

    def run(self) -> SolveResult:
        p = self.problem
        G = len(self.groups)
        total_cells = (self.T - self.F) * G
        self._replay_frozen()
        self.nodes = 0
        self.incumbent: dict[str, list[int]] | None = None
        self.inc_credit = -math.inf
        self.inc_changes = math.inf
        self.x = [[0] * self.T for _ in range(G)]
        self.slot_draw = [0.0] * self.T
        self.bus_draw = [[0.0] * len(self.buses) for _ in range(self.T)]
        budget_hit = False

        if total_cells == 0:
            self._record_incumbent()
            schedule = self._make_schedule(optimal=True)
            return SolveResult(SolveStatus.OPTIMAL, schedule, 0)

        # Iterative DFS: stack of (cell, values-to-try, undo for current value).
        stack: list[list] = [[0, self._value_order(0), None]]
        while stack:
            frame = stack[-1]
            cell, values, undo = frame
            if undo is not None:
                self._unassign(cell, undo)
                frame[2] = None
            if not values:
                stack.pop()
                continue
            v = values.pop(0)
            self.nodes += 1
            if self.nodes > self.node_budget:
                budget_hit = True
                break
            undo = self._try_assign(cell, v)
            if undo is None:
                continue
            frame[2] = undo
            nxt = cell + 1
            if nxt == total_cells:
                self._record_incumbent()
                continue
            if (nxt % G) == 0 and not self._slot_boundary_ok(nxt):
                continue
            stack.append([nxt, self._value_order(nxt), None])

        if self.incumbent is not None:
            optimal = not budget_hit
            schedule = self._make_schedule(optimal)
            status = SolveStatus.OPTIMAL if optimal else SolveStatus.FEASIBLE
            return SolveResult(status, schedule, self.nodes)
        if budget_hit:
            return SolveResult(SolveStatus.TIMEOUT, None, self.nodes)
        return SolveResult(SolveStatus.INFEASIBLE, None, self.nodes)

    def _cell_pos(self, cell: int) -> tuple[int, int]:
        G = len(self.groups)
        return self.F + cell // G, cell % G

    def _value_order(self, cell: int) -> list[int]:
        """OFF first by default; prefer ON once a duty run is due.

        Each group's mandatory runs are staggered by group rank so that
        aligned duty periods do not pile every load onto the same slots of a
        binding peak profile. Mutex pairs stagger maximally: the lower-ranked
        side front-loads its duty.
        """
        t, gi = self._cell_pos(cell)
        group = self.groups[gi]
        if group.forced_off:
            return [0]
        G = len(self.groups)
        for e in group.duty_entries:
            q = t % e.P
            base = 0 if q == 0 else e.count
            if base >= e.r or t - q + e.P > self.T:
                continue  # window satisfied or incomplete
            slack = (e.P - q - 1) - (e.r - base)
            if group.front_load:
                return [1, 0]
            threshold = (gi * (e.P - e.r)) // max(G, 1)
            if slack <= threshold:
                return [1, 0]
        return [0, 1]

    def _try_assign(self, cell: int, v: int):
        """Returns an undo record if the assignment is consistent, else None."""
        t, gi = self._cell_pos(cell)
        group = self.groups[gi]
        p = self.problem

        if v == 1:
            if group.forced_off:
                return None
            for partner in group.mutex_partners:
                if self.x[partner][t] == 1:
                    return None
            if self.slot_draw[t] + group.draw_w > p.peak_power_profile[t] + _EPS:
                return None
            for bus_id, draw in group.bus_draws.items():
                bi = self.bus_index[bus_id]
                if self.bus_draw[t][bi] + draw > self.bus_caps[bi] + _EPS:
                    return None
            if self.energy_used + group.draw_w * self.slot_h > p.energy_budget_wh + 1e-6:
                return None

        # Duty feasibility and run-length checks before any state update.
        if v == 0:
            for e in group.duty_entries:
                base = 0 if t % e.P == 0 else e.count
                window_start = (t // e.P) * e.P
                complete = window_start + e.P <= self.T
                if complete and (e.r - base) > (e.P - (t % e.P) - 1):
                    return None
            for s in group.run_states:
                if s.off_limit is not None and s.off_run + 1 > s.off_limit:
                    return None
                if (
                    s.min_run is not None
                    and s.on_run > 0
                    and s.run_start > 0
                    and s.on_run < s.min_run
                ):
                    return None

        entry_undo = []
        run_undo = []
        credit_delta = 0.0
        for e in group.duty_entries:
            base = 0 if t % e.P == 0 else e.count
            entry_undo.append((e, e.count))
            if v == 1:
                if base < e.r:
                    credit_delta += e.weight
                e.count = base + 1
            else:
                e.count = base
        for s in group.run_states:
            run_undo.append((s, s.off_run, s.on_run, s.run_start))
            if v == 1:
                if s.on_run == 0:
                    s.run_start = t
                s.on_run += 1
                s.off_run = 0
            else:
                s.off_run += 1
                s.on_run = 0
                s.run_start = -1

        changes_delta = 0
        prev_undo = []
        for member in group.members:
            prev_undo.append((member, self.prev_mode[member]))
            if v != self.prev_mode[member]:
                changes_delta += 1
            self.prev_mode[member] = v

        self.x[gi][t] = v
        energy_delta = group.draw_w * self.slot_h if v == 1 else 0.0
        self.energy_used += energy_delta
        self.credit += credit_delta
        self.changes += changes_delta
        if v == 1:
            self.slot_draw[t] += group.draw_w
            for bus_id, draw in group.bus_draws.items():
                self.bus_draw[t][self.bus_index[bus_id]] += draw

        # Objective bound against the incumbent (tie-break on mode changes).
        if self.incumbent is not None:
            ub = self.credit + self._future_credit(cell + 1)
            if ub < self.inc_credit - _EPS or (
                ub <= self.inc_credit + _EPS and self.changes >= self.inc_changes
            ):
                undo = (gi, t, v, energy_delta, credit_delta, changes_delta, entry_undo, run_undo, prev_undo)
                self._unassign_record(undo)
                return None

        return (gi, t, v, energy_delta, credit_delta, changes_delta, entry_undo, run_undo, prev_undo)

    def _unassign(self, cell: int, undo) -> None:
        self._unassign_record(undo)

    def _unassign_record(self, undo) -> None:
        gi, t, v, energy_delta, credit_delta, changes_delta, entry_undo, run_undo, prev_undo = undo
        group = self.groups[gi]
        self.x[gi][t] = 0
        self.energy_used -= energy_delta
        self.credit -= credit_delta
        self.changes -= changes_delta
        if v == 1:
            self.slot_draw[t] -= group.draw_w
            for bus_id, draw in group.bus_draws.items():
                self.bus_draw[t][self.bus_index[bus_id]] -= draw
        for e, old in entry_undo:
            e.count = old
        for s, off_run, on_run, run_start in run_undo:
            s.off_run = off_run
            s.on_run = on_run
            s.run_start = run_start
        for member, old in prev_undo:
            self.prev_mode[member] = old

    def _future_credit(self, next_cell: int) -> float:
        """Optimistic duty credit obtainable from next_cell onward."""
        G = len(self.groups)
        t_next = self.F + next_cell // G
        g_next = next_cell % G
        total = 0.0
        for i, e in enumerate(self.entries):
            # Slot from which this entry's group is still undecided.
            s = t_next if e.group >= g_next else t_next + 1
            if s >= self.T:
                continue
            w = s // e.P
            window_start = w * e.P
            length = min(e.P, self.T - window_start)
            base = 0 if s % e.P == 0 else e.count
            remaining_in_window = window_start + length - s
            potential = min(max(e.r - base, 0), remaining_in_window)
            total += e.weight * potential + self.suffix_credit[i][w + 1]
        return total

    def _slot_boundary_ok(self, next_cell: int) -> bool:
        """Mandatory-energy prune once a slot is fully assigned."""
        G = len(self.groups)
        t_next = self.F + next_cell // G
        mandatory = [0] * len(self.groups)
        for i, e in enumerate(self.entries):
            if t_next >= self.T:
                continue
            w = t_next // e.P
            window_start = w * e.P
            complete = window_start + e.P <= self.T
            base = 0 if t_next % e.P == 0 else e.count
            need = max(e.r - base, 0) if complete else 0
            total_need = need + self.suffix_required[i][w + 1]
            if total_need > mandatory[e.group]:
                mandatory[e.group] = total_need
        lower = sum(
            self.groups[g].draw_w * mandatory[g] * self.slot_h for g in range(len(self.groups))
        )
        return self.energy_used + lower <= self.problem.energy_budget_wh + 1e-6

    def _record_incumbent(self) -> None:
        if self.credit > self.inc_credit + _EPS or (
            self.credit >= self.inc_credit - _EPS and self.changes < self.inc_changes
        ):
            self.inc_credit = self.credit
            self.inc_changes = self.changes
            matrix: dict[str, list[int]] = {}
            for spec in self.problem.loads:
                gi = self.group_of[spec.id]
                row = list(self.problem.frozen.get(spec.id, []))
                row += self.x[gi][self.F:]
                matrix[spec.id] = row
            self.incumbent = matrix

    def _make_schedule(self, optimal: bool) -> Schedule:
        assert self.incumbent is not None
        credit, changes = objective_of(self.problem, self.incumbent)
        return Schedule(
            load_ids=[spec.id for spec in self.problem.loads],
            modes=self.incumbent,
            objective_value=credit,
            mode_changes=changes,
            optimal=optimal,
        )


def build_problem(
    loads: list[LoadSpec],
    power,
    constraints: ConstraintSet,
    horizon_s: int,
    slot_s: int,
    initial_modes: dict[str, str],
    soc_wh: float,
    frozen_slots: int = 0,
    frozen: dict[str, list[int]] | None = None,
    forced_off: set[str] | None = None,
    amendments: list[str] | None = None,
) -> SchedulingProblem:
    """Assemble the slotted problem from power-system state.

    The per-slot peak is what generation can deliver: solar plus the battery
    discharge limit, battery-only in any slot overlapping an eclipse window.
    The energy budget is the battery charge above reserve plus solar energy
    over the horizon (plus whatever a frozen prefix already consumed, since
    the budget applies to the full matrix).
    """
    if horizon_s % slot_s != 0:
        raise SchedulingError("horizon_s must be divisible by slot_s")
    slots = horizon_s // slot_s
    frozen = frozen or {}
    slot_h = slot_s / 3600.0

    def slot_in_eclipse(t: int) -> bool:
        start, end = t * slot_s, (t + 1) * slot_s
        return any(start < e_end and end > e_start for e_start, e_end in power.eclipse_windows)

    peak = [
        (0.0 if slot_in_eclipse(t) else power.solar_output_w) + power.max_discharge_w
        for t in range(slots)
    ]
    future_solar_wh = sum(
        0.0 if slot_in_eclipse(t) else power.solar_output_w * slot_h
        for t in range(frozen_slots, slots)
    )
    frozen_energy = 0.0
    for spec in loads:
        history = frozen.get(spec.id, [])
        frozen_energy += spec.power_draw_w * sum(history) * slot_h
    budget = frozen_energy + max(0.0, soc_wh - power.reserve_wh) + future_solar_wh
    return SchedulingProblem(
        horizon_s=horizon_s,
        slot_s=slot_s,
        loads=loads,
        constraints=constraints,
        peak_power_profile=peak,
        energy_budget_wh=budget,
        initial_modes=dict(initial_modes),
        forced_off=set(forced_off or set()),
        frozen_slots=frozen_slots,
        frozen={k: list(v) for k, v in frozen.items()},
        amendments=list(amendments or []),
    )


# -- plan emission ---------------------------------------------------------


def to_plan(schedule: Schedule, problem: SchedulingProblem, verify_timeout_s: int = 45):
    """Compile a schedule into executable plan text and parse it back.

    One command node plus one verify node per mode change at or after the
    frozen prefix, grouped per load, plus a root list and a horizon-keeper
    wait node. Excluded (forced-off) loads get their shutdown command without
    a verify node: their bus may be dead, leaving no live sensor to confirm.
    Returns the parsed PlanTree (round-trip safe by construction).
    """
    from .plans import parse_plan

    slot_s = problem.slot_s
    lines = ["list plan_root {"]
    for spec in problem.loads:
        row = schedule.modes[spec.id]
        prev = 1 if problem.initial_modes.get(spec.id, OFF) == ON else 0
        if problem.frozen_slots > 0:
            prev = row[problem.frozen_slots - 1]
        changes = [
            (t, row[t])
            for t in range(problem.frozen_slots, len(row))
            if row[t] != (row[t - 1] if t > problem.frozen_slots else prev)
        ]
        if not changes:
            continue
        verified = spec.id not in problem.forced_off
        lines.append(f"  list grp_{spec.id} {{")
        for t, v in changes:
            mode_text = ON if v else OFF
            code = 1 if v else 0
            at = t * slot_s
            cmd_id = f"cmd_{spec.id}_{t:04d}"
            vfy_id = f"vfy_{spec.id}_{t:04d}"
            lines.append(f"    command {cmd_id} {{")
            lines.append(f"      start: time >= {at}")
            lines.append(f"      end: lookup({spec.id}.cmd_ack) == {code}")
            lines.append(f"      action: set_load({spec.id}, {mode_text})")
            lines.append("    }")
            if verified:
                lines.append(f"    wait {vfy_id} {{")
                lines.append(f"      start: finished({cmd_id})")
                lines.append(f"      end: lookup({spec.id}.mode) == {code}")
                lines.append(f"      invariant: time < {at + verify_timeout_s}")
                lines.append("    }")
        lines.append("  }")
    lines.append("  wait plan_horizon {")
    lines.append(f"    end: time >= {problem.horizon_s}")
    lines.append("  }")
    lines.append("}")
    return parse_plan("\n".join(lines) + "\n")


# -- problem file round-trip for the CLI -------------------------------------


def parse_problem_file(text: str, path: str = "") -> SchedulingProblem:
    from .simulation import ModelFileError

    horizon_s = slot_s = 0
    energy = math.inf
    loads: list[LoadSpec] = []
    cs = ConstraintSet()
    peak_uniform = math.inf
    peak_slots: list[float] = []
    initial: dict[str, str] = {}
    forced: set[str] = set()
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1]
            continue
        parts = line.split()
        try:
            if section == "problem":
                key, _, value = line.partition("=")
                key = key.strip()
                value = value.strip()
                if key == "horizon_s":
                    horizon_s = int(value)
                elif key == "slot_s":
                    slot_s = int(value)
                elif key == "energy_budget_wh":
                    energy = float(value)
                else:
                    raise ModelFileError(f"unknown problem key {key!r}", path, lineno)
            elif section == "loads":
                kv = dict(p.split("=", 1) for p in parts[1:])
                loads.append(
                    LoadSpec(parts[0], kv["bus_id"], float(kv["power_draw_w"]),
                             float(kv.get("weight", 1.0)))
                )
            elif section == "duty":
                kv = dict(p.split("=", 1) for p in parts[1:])
                cs.duty.append(DutyConstraint(parts[0], int(kv["min_on_s"]), int(kv["period_s"])))
            elif section == "sync":
                cs.sync.append(SyncConstraint(parts[0], parts[1]))
            elif section == "mutex":
                cs.mutex.append(MutexConstraint(parts[0], parts[1]))
            elif section == "max_off":
                kv = dict(p.split("=", 1) for p in parts[1:])
                cs.max_off.append(MaxOffConstraint(parts[0], int(kv["max_off_s"])))
            elif section == "min_on_run":
                kv = dict(p.split("=", 1) for p in parts[1:])
                cs.min_on_run.append(MinOnRunConstraint(parts[0], int(kv["min_run_s"])))
            elif section == "bus_capacity":
                cs.bus_capacity.append(BusCapacityConstraint(parts[0], float(parts[1])))
            elif section == "peak":
                if parts[0] == "uniform":
                    peak_uniform = float(parts[1])
                else:
                    peak_slots.extend(float(v) for v in parts)
            elif section == "initial":
                initial[parts[0]] = parts[1]
            elif section == "forced_off":
                forced.add(parts[0])
            else:
                raise ModelFileError(f"unknown section [{section}]", path, lineno)
        except ModelFileError:
            raise
        except (KeyError, ValueError, IndexError) as exc:
            raise ModelFileError(f"malformed line: {exc}", path, lineno) from exc
    if horizon_s <= 0 or slot_s <= 0:
        raise ModelFileError("problem requires horizon_s and slot_s", path)
    slots = horizon_s // slot_s
    profile = peak_slots if peak_slots else [peak_uniform] * slots
    return SchedulingProblem(
        horizon_s=horizon_s,
        slot_s=slot_s,
        loads=loads,
        constraints=cs,
        peak_power_profile=profile,
        energy_budget_wh=energy,
        initial_modes=initial,
        forced_off=forced,
    )


def format_schedule(schedule: Schedule) -> str:
    lines = [
        f"objective {schedule.objective_value:.6g}",
        f"mode_changes {schedule.mode_changes}",
        f"optimal {str(schedule.optimal).lower()}",
    ]
    for load_id in schedule.load_ids:
        pattern = "".join(str(v) for v in schedule.modes[load_id])
        lines.append(f"{load_id} {pattern}")
    return "\n".join(lines) + "\n"
