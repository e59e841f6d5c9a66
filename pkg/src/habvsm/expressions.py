"""Three-valued boolean expression language for plan conditions and observations.

Expressions are parsed from infix text (`lookup(bus1.voltage_v) > 14 and
time < 600`) into an immutable AST and evaluated against a context that
supplies telemetry lookups, the current sim time, plan node states, and
plan-local variables. A lookup of a stale or missing parameter yields
UNKNOWN, which satisfies neither a condition nor its negation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Protocol


class Unknown:
    """Singleton truth value for conditions over stale or missing data."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNKNOWN"


UNKNOWN = Unknown()

# Node-state predicates usable inside conditions.
STATE_PREDICATES = ("finished", "failed", "executing", "skipped", "waiting")


class ExpressionError(Exception):
    """Syntax or reference error, carrying source line and column."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} (line {line}, col {col})")
        self.message = message
        self.line = line
        self.col = col


class EvalContext(Protocol):
    def lookup(self, param: str) -> float | Unknown: ...

    def now_s(self) -> float: ...

    def node_state(self, node_id: str) -> str: ...

    def variable(self, name: str) -> float | Unknown: ...


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


_PUNCT = ("==", "!=", "<=", ">=", "<", ">", "(", ")", "+", "-", "*", "/", ",")
_KEYWORDS = ("and", "or", "not", "true", "false", "time", "lookup", "var") + STATE_PREDICATES


def _tokenize(text: str, line_offset: int = 1) -> Iterator[Token]:
    line = line_offset
    col = 1
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        matched = False
        for p in _PUNCT:
            if text.startswith(p, i):
                yield Token("punct", p, line, col)
                i += len(p)
                col += len(p)
                matched = True
                break
        if matched:
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and (text[j].isdigit() or text[j] in ".eE" or (text[j] in "+-" and text[j - 1] in "eE")):
                j += 1
            yield Token("number", text[i:j], line, col)
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] in "._"):
                j += 1
            word = text[i:j]
            kind = "keyword" if word in _KEYWORDS else "ident"
            yield Token(kind, word, line, col)
            col += j - i
            i = j
            continue
        raise ExpressionError(f"unexpected character {ch!r}", line, col)
    yield Token("eof", "", line, col)


# AST nodes. Frozen dataclasses so parsed trees are hashable and comparable.


@dataclass(frozen=True)
class Literal:
    value: float | bool

    def eval(self, ctx: EvalContext):
        return self.value


@dataclass(frozen=True)
class TimeRef:
    def eval(self, ctx: EvalContext):
        return ctx.now_s()


@dataclass(frozen=True)
class Lookup:
    param: str

    def eval(self, ctx: EvalContext):
        return ctx.lookup(self.param)


@dataclass(frozen=True)
class VarRef:
    name: str

    def eval(self, ctx: EvalContext):
        return ctx.variable(self.name)


@dataclass(frozen=True)
class StateTest:
    predicate: str
    node_id: str

    def eval(self, ctx: EvalContext):
        return ctx.node_state(self.node_id).lower() == self.predicate


@dataclass(frozen=True)
class Arith:
    op: str
    left: object
    right: object

    def eval(self, ctx: EvalContext):
        a = self.left.eval(ctx)
        b = self.right.eval(ctx)
        if a is UNKNOWN or b is UNKNOWN:
            return UNKNOWN
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if b == 0:
            return UNKNOWN
        return a / b


@dataclass(frozen=True)
class Compare:
    op: str
    left: object
    right: object

    def eval(self, ctx: EvalContext):
        a = self.left.eval(ctx)
        b = self.right.eval(ctx)
        if a is UNKNOWN or b is UNKNOWN:
            return UNKNOWN
        if self.op == "==":
            return a == b
        if self.op == "!=":
            return a != b
        if self.op == "<":
            return a < b
        if self.op == "<=":
            return a <= b
        if self.op == ">":
            return a > b
        return a >= b


@dataclass(frozen=True)
class Not:
    operand: object

    def eval(self, ctx: EvalContext):
        v = self.operand.eval(ctx)
        if v is UNKNOWN:
            return UNKNOWN
        return not _truth(v)


@dataclass(frozen=True)
class And:
    left: object
    right: object

    def eval(self, ctx: EvalContext):
        a = self.left.eval(ctx)
        if a is not UNKNOWN and not _truth(a):
            return False
        b = self.right.eval(ctx)
        if b is not UNKNOWN and not _truth(b):
            return False
        if a is UNKNOWN or b is UNKNOWN:
            return UNKNOWN
        return True


@dataclass(frozen=True)
class Or:
    left: object
    right: object

    def eval(self, ctx: EvalContext):
        a = self.left.eval(ctx)
        if a is not UNKNOWN and _truth(a):
            return True
        b = self.right.eval(ctx)
        if b is not UNKNOWN and _truth(b):
            return True
        if a is UNKNOWN or b is UNKNOWN:
            return UNKNOWN
        return False


def _truth(v) -> bool:
    if isinstance(v, bool):
        return v
    return bool(v != 0)


Expr = object


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.advance()
        if tok.text != text:
            raise ExpressionError(f"expected {text!r}, found {tok.text!r}", tok.line, tok.col)
        return tok

    def parse(self) -> Expr:
        expr = self.or_expr()
        tok = self.peek()
        if tok.kind != "eof":
            raise ExpressionError(f"unexpected trailing input {tok.text!r}", tok.line, tok.col)
        return expr

    def or_expr(self) -> Expr:
        left = self.and_expr()
        while self.peek().text == "or":
            self.advance()
            left = Or(left, self.and_expr())
        return left

    def and_expr(self) -> Expr:
        left = self.not_expr()
        while self.peek().text == "and":
            self.advance()
            left = And(left, self.not_expr())
        return left

    def not_expr(self) -> Expr:
        if self.peek().text == "not":
            self.advance()
            return Not(self.not_expr())
        return self.comparison()

    def comparison(self) -> Expr:
        left = self.sum()
        tok = self.peek()
        if tok.text in ("==", "!=", "<", "<=", ">", ">="):
            self.advance()
            return Compare(tok.text, left, self.sum())
        return left

    def sum(self) -> Expr:
        left = self.term()
        while self.peek().text in ("+", "-"):
            op = self.advance().text
            left = Arith(op, left, self.term())
        return left

    def term(self) -> Expr:
        left = self.atom()
        while self.peek().text in ("*", "/"):
            op = self.advance().text
            left = Arith(op, left, self.atom())
        return left

    def atom(self) -> Expr:
        tok = self.advance()
        if tok.text == "(":
            inner = self.or_expr()
            self.expect(")")
            return inner
        if tok.text == "-":
            return Arith("-", Literal(0.0), self.atom())
        if tok.kind == "number":
            return Literal(float(tok.text))
        if tok.text == "true":
            return Literal(True)
        if tok.text == "false":
            return Literal(False)
        if tok.text == "time":
            return TimeRef()
        if tok.text == "lookup":
            self.expect("(")
            name = self.advance()
            if name.kind not in ("ident", "keyword"):
                raise ExpressionError("lookup() requires a parameter name", name.line, name.col)
            self.expect(")")
            return Lookup(name.text)
        if tok.text == "var":
            self.expect("(")
            name = self.advance()
            if name.kind not in ("ident", "keyword"):
                raise ExpressionError("var() requires a variable name", name.line, name.col)
            self.expect(")")
            return VarRef(name.text)
        if tok.text in STATE_PREDICATES:
            self.expect("(")
            name = self.advance()
            if name.kind not in ("ident", "keyword"):
                raise ExpressionError(f"{tok.text}() requires a node id", name.line, name.col)
            self.expect(")")
            return StateTest(tok.text, name.text)
        raise ExpressionError(f"unexpected token {tok.text!r}", tok.line, tok.col)


def parse_expression(text: str, line_offset: int = 1) -> Expr:
    """Parse infix condition text into an AST; raises ExpressionError with location."""
    return _Parser(list(_tokenize(text, line_offset))).parse()


def referenced_parameters(expr: Expr) -> set[str]:
    """All telemetry parameter ids the expression looks up."""
    found: set[str] = set()
    _walk_refs(expr, found, Lookup, "param")
    return found


def referenced_nodes(expr: Expr) -> set[str]:
    """All plan node ids tested by node-state predicates."""
    found: set[str] = set()
    _walk_refs(expr, found, StateTest, "node_id")
    return found


def _walk_refs(expr, found: set[str], node_type, attr: str) -> None:
    if isinstance(expr, node_type):
        found.add(getattr(expr, attr))
    for name in ("left", "right", "operand"):
        child = getattr(expr, name, None)
        if child is not None:
            _walk_refs(child, found, node_type, attr)
