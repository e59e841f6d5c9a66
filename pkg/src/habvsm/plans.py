"""Hierarchical plan language and its small-step execution engine.

Plans are trees of list/command/assignment/wait nodes, each carrying up to
four gating conditions (start, end, invariant, skip) written in the infix
expression language. Execution advances in macro-steps: within one frame
the transition relation is applied over the tree in depth-first order,
sweep after sweep, until no node changes state. Command nodes emit their
command once, on entry to EXECUTING. Conditions see only the current frame;
stale or missing telemetry makes a condition UNKNOWN, which never fires it.

Node states: INACTIVE, WAITING, EXECUTING, FINISHED, FAILED, SKIPPED.
Terminal states absorb. A list node finishes when every child has finished
or been skipped and fails as soon as any child fails; failure cascades down
to non-terminal descendants in the same micro-step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .expressions import (
    UNKNOWN,
    ExpressionError,
    Expr,
    Literal,
    parse_expression,
    referenced_nodes,
    referenced_parameters,
)
from .simulation import Command, SensorFrame

INACTIVE = "INACTIVE"
WAITING = "WAITING"
EXECUTING = "EXECUTING"
FINISHED = "FINISHED"
FAILED = "FAILED"
SKIPPED = "SKIPPED"

TERMINAL = (FINISHED, FAILED, SKIPPED)

LIST = "LIST"
COMMAND = "COMMAND"
ASSIGNMENT = "ASSIGNMENT"
WAIT = "WAIT"

_KIND_KEYWORDS = {"list": LIST, "command": COMMAND, "assignment": ASSIGNMENT, "wait": WAIT}

TRUE_EXPR = Literal(True)
FALSE_EXPR = Literal(False)


class PlanError(Exception):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        loc = f" (line {line}, col {col})" if line else ""
        super().__init__(f"{message}{loc}")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class CommandSpec:
    kind: str
    target: str
    value: str

    def to_command(self) -> Command:
        return Command(self.kind, self.target, self.value)


@dataclass(frozen=True)
class AssignSpec:
    variable: str
    expr: Expr


@dataclass(eq=False)
class PlanNode:
    id: str
    kind: str
    start_cond: Expr = TRUE_EXPR
    end_cond: Expr = TRUE_EXPR
    invariant_cond: Expr = TRUE_EXPR
    skip_cond: Expr = FALSE_EXPR
    command: CommandSpec | None = None
    assign: AssignSpec | None = None
    children: list["PlanNode"] = field(default_factory=list)
    state: str = INACTIVE
    fail_reason: str = ""

    def structure(self) -> tuple:
        """Hashable structural identity, used for round-trip checks."""
        return (
            self.id,
            self.kind,
            self.start_cond,
            self.end_cond,
            self.invariant_cond,
            self.skip_cond,
            self.command,
            self.assign,
            tuple(c.structure() for c in self.children),
        )

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass
class PlanTree:
    root: PlanNode
    source_text: str

    def nodes(self) -> list[PlanNode]:
        return list(self.root.walk())

    def node_count(self) -> int:
        return sum(1 for _ in self.root.walk())

    def find(self, node_id: str) -> PlanNode:
        for node in self.root.walk():
            if node.id == node_id:
                return node
        raise KeyError(node_id)


@dataclass(frozen=True)
class NodeTransition:
    node_id: str
    from_state: str
    to_state: str
    reason: str = ""


# -- parser ---------------------------------------------------------------


class _Lines:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.idx = 0

    def next_content(self) -> tuple[str, int] | None:
        while self.idx < len(self.lines):
            raw = self.lines[self.idx]
            self.idx += 1
            stripped = raw.split("#", 1)[0].strip()
            if stripped:
                return stripped, self.idx
        return None

    def peek_content(self) -> tuple[str, int] | None:
        saved = self.idx
        result = self.next_content()
        self.idx = saved
        return result


def _parse_node(lines: _Lines, header: str, lineno: int) -> PlanNode:
    parts = header.split()
    if len(parts) != 3 or parts[0] not in _KIND_KEYWORDS or parts[2] != "{":
        raise PlanError(f"expected '<kind> <id> {{', found {header!r}", lineno)
    kind = _KIND_KEYWORDS[parts[0]]
    node = PlanNode(id=parts[1], kind=kind)
    while True:
        item = lines.next_content()
        if item is None:
            raise PlanError(f"unterminated block for node {node.id!r}", lineno)
        line, ln = item
        if line == "}":
            break
        head, sep, rest = line.partition(":")
        head = head.strip()
        if sep and head in ("start", "end", "invariant", "skip"):
            try:
                expr = parse_expression(rest.strip(), ln)
            except ExpressionError as exc:
                raise PlanError(f"bad {head} condition: {exc.message}", ln, exc.col) from exc
            setattr(node, f"{head}_cond", expr)
        elif sep and head == "action":
            if kind != COMMAND:
                raise PlanError("action: is only valid in command nodes", ln)
            node.command = _parse_action(rest.strip(), ln)
        elif sep and head == "assign":
            if kind != ASSIGNMENT:
                raise PlanError("assign: is only valid in assignment nodes", ln)
            if ":=" not in rest:
                raise PlanError("assign clause must be 'assign: name := expr'", ln)
            var, expr_text = rest.split(":=", 1)
            node.assign = AssignSpec(var.strip(), parse_expression(expr_text.strip(), ln))
        elif line.split()[0] in _KIND_KEYWORDS:
            if kind != LIST:
                raise PlanError(f"only list nodes may contain children ({node.id!r})", ln)
            node.children.append(_parse_node(lines, line, ln))
        else:
            raise PlanError(f"unrecognized clause {line!r}", ln)
    if kind == COMMAND and node.command is None:
        raise PlanError(f"command node {node.id!r} has no action", lineno)
    if kind == ASSIGNMENT and node.assign is None:
        raise PlanError(f"assignment node {node.id!r} has no assign clause", lineno)
    return node


def _parse_action(text: str, lineno: int) -> CommandSpec:
    if "(" not in text or not text.endswith(")"):
        raise PlanError(f"action must be 'name(target, value)', found {text!r}", lineno)
    name, _, args = text[:-1].partition("(")
    parts = [a.strip() for a in args.split(",")]
    if len(parts) != 2:
        raise PlanError("action takes exactly (target, value)", lineno)
    return CommandSpec(name.strip(), parts[0], parts[1])


def parse_plan(text: str, parameter_dictionary: set[str] | None = None) -> PlanTree:
    """Parse plan text; validates node-id uniqueness, child placement, and
    (when a parameter dictionary is supplied) every telemetry reference."""
    lines = _Lines(text)
    first = lines.next_content()
    if first is None:
        raise PlanError("empty plan text")
    root = _parse_node(lines, first[0], first[1])
    trailing = lines.next_content()
    if trailing is not None:
        raise PlanError(f"unexpected content after root node: {trailing[0]!r}", trailing[1])

    seen: set[str] = set()
    all_ids: set[str] = set()
    for node in root.walk():
        if node.id in seen:
            raise PlanError(f"duplicate node id {node.id!r}")
        seen.add(node.id)
        all_ids.add(node.id)
    for node in root.walk():
        for cond in (node.start_cond, node.end_cond, node.invariant_cond, node.skip_cond):
            for ref in referenced_nodes(cond):
                if ref not in all_ids:
                    raise PlanError(f"node {node.id!r} references unknown node {ref!r}")
            if parameter_dictionary is not None:
                for param in referenced_parameters(cond):
                    if param not in parameter_dictionary:
                        raise PlanError(
                            f"node {node.id!r} references unknown parameter {param!r}"
                        )
    return PlanTree(root, text)


# -- executive --------------------------------------------------------------


class _ExecContext:
    def __init__(self, executive: "Executive", frame: SensorFrame, now_s: float):
        self.executive = executive
        self.frame = frame
        self.now = now_s

    def lookup(self, param: str):
        if param not in self.frame.values or self.frame.staleness.get(param, False):
            return UNKNOWN
        return self.frame.values[param]

    def now_s(self) -> float:
        return self.now

    def node_state(self, node_id: str) -> str:
        node = self.executive._by_id.get(node_id)
        return node.state.lower() if node else "inactive"

    def variable(self, name: str):
        return self.executive.variables.get(name, UNKNOWN)


class Executive:
    """Deterministic plan interpreter driven one frame at a time."""

    # Defensive bound: each node can transition at most 3 times, so sweeps
    # beyond this multiple of the node count indicate a semantics bug.
    SWEEP_FACTOR = 4

    def __init__(self):
        self.tree: PlanTree | None = None
        self.variables: dict[str, float] = {}
        self._by_id: dict[str, PlanNode] = {}
        self._parent: dict[str, PlanNode | None] = {}
        self.halted = False
        self.halt_reason = ""

    def load_plan(self, tree: PlanTree) -> list[NodeTransition]:
        """Install a new tree; any executing nodes of the old one are superseded."""
        transitions: list[NodeTransition] = []
        if self.tree is not None:
            for node in self.tree.root.walk():
                if node.state in (EXECUTING, WAITING):
                    transitions.append(
                        NodeTransition(node.id, node.state, FAILED, "SUPERSEDED")
                    )
                    node.state = FAILED
                    node.fail_reason = "SUPERSEDED"
        self.tree = tree
        self.variables = {}
        self.halted = False
        self.halt_reason = ""
        self._by_id = {n.id: n for n in tree.root.walk()}
        self._parent = {}
        for node in tree.root.walk():
            for child in node.children:
                self._parent[child.id] = node
        self._parent[tree.root.id] = None
        return transitions

    def macro_step(self, frame: SensorFrame, now_s: float) -> tuple[list[Command], list[NodeTransition]]:
        """Run micro-step sweeps to quiescence; returns emitted commands and transitions."""
        if self.tree is None or self.halted:
            return [], []
        ctx = _ExecContext(self, frame, now_s)
        commands: list[Command] = []
        transitions: list[NodeTransition] = []
        max_sweeps = self.SWEEP_FACTOR * self.tree.node_count()
        sweeps = 0
        while True:
            changed = False
            for node in self.tree.root.walk():
                t = self._transition(node, ctx)
                if t is not None:
                    transitions.append(t)
                    changed = True
                    if t.to_state == EXECUTING and node.kind == COMMAND:
                        commands.append(node.command.to_command())
                    if t.to_state == EXECUTING and node.kind == ASSIGNMENT:
                        value = node.assign.expr.eval(ctx)
                        if value is not UNKNOWN:
                            self.variables[node.assign.variable] = value
                    if t.to_state == FAILED:
                        transitions.extend(self._cascade_failure(node))
            if not changed:
                break
            sweeps += 1
            if sweeps > max_sweeps:
                self.halted = True
                self.halt_reason = f"non-quiescent after {sweeps} sweeps"
                break
        return commands, transitions

    def _transition(self, node: PlanNode, ctx: _ExecContext) -> NodeTransition | None:
        state = node.state
        if state in TERMINAL:
            return None
        if state == INACTIVE:
            parent = self._parent.get(node.id)
            if parent is None or parent.state == EXECUTING:
                node.state = WAITING
                return NodeTransition(node.id, INACTIVE, WAITING)
            return None
        if state == WAITING:
            if node.skip_cond.eval(ctx) is True:
                node.state = SKIPPED
                return NodeTransition(node.id, WAITING, SKIPPED)
            if node.start_cond.eval(ctx) is True:
                node.state = EXECUTING
                return NodeTransition(node.id, WAITING, EXECUTING)
            return None
        # EXECUTING
        if node.kind == LIST and any(c.state == FAILED for c in node.children):
            node.state = FAILED
            node.fail_reason = "CHILD_FAILED"
            return NodeTransition(node.id, EXECUTING, FAILED, "CHILD_FAILED")
        if node.invariant_cond.eval(ctx) is False:
            node.state = FAILED
            node.fail_reason = "INVARIANT"
            return NodeTransition(node.id, EXECUTING, FAILED, "INVARIANT")
        if node.kind == LIST:
            if all(c.state in (FINISHED, SKIPPED) for c in node.children) and (
                node.end_cond.eval(ctx) is True
            ):
                node.state = FINISHED
                return NodeTransition(node.id, EXECUTING, FINISHED)
            return None
        if node.end_cond.eval(ctx) is True:
            node.state = FINISHED
            return NodeTransition(node.id, EXECUTING, FINISHED)
        return None

    def _cascade_failure(self, node: PlanNode) -> list[NodeTransition]:
        cascaded: list[NodeTransition] = []
        for child in node.children:
            for desc in child.walk():
                if desc.state not in TERMINAL:
                    cascaded.append(
                        NodeTransition(desc.id, desc.state, FAILED, "ANCESTOR_FAILED")
                    )
                    desc.state = FAILED
                    desc.fail_reason = "ANCESTOR_FAILED"
        return cascaded

    def root_state(self) -> str:
        return self.tree.root.state if self.tree else INACTIVE

    def node_states(self) -> dict[str, str]:
        if self.tree is None:
            return {}
        return {n.id: n.state for n in self.tree.root.walk()}
