import pytest

from habvsm.expressions import (
    UNKNOWN,
    ExpressionError,
    parse_expression,
    referenced_nodes,
    referenced_parameters,
)


class Ctx:
    def __init__(self, values=None, time=0.0, states=None, variables=None):
        self.values = values or {}
        self.time = time
        self.states = states or {}
        self.vars = variables or {}

    def lookup(self, param):
        return self.values.get(param, UNKNOWN)

    def now_s(self):
        return self.time

    def node_state(self, node_id):
        return self.states.get(node_id, "inactive")

    def variable(self, name):
        return self.vars.get(name, UNKNOWN)


def test_comparison_and_arithmetic():
    e = parse_expression("lookup(a) * 2 + 1 >= 7")
    assert e.eval(Ctx({"a": 3})) is True
    assert e.eval(Ctx({"a": 2.9})) is False


def test_boolean_connectives():
    e = parse_expression("lookup(a) > 0 and not (lookup(b) == 1 or time > 10)")
    assert e.eval(Ctx({"a": 1, "b": 0}, time=5)) is True
    assert e.eval(Ctx({"a": 1, "b": 1}, time=5)) is False


def test_unknown_satisfies_neither_polarity():
    e = parse_expression("lookup(missing) > 5")
    ne = parse_expression("not (lookup(missing) > 5)")
    ctx = Ctx()
    assert e.eval(ctx) is UNKNOWN
    assert ne.eval(ctx) is UNKNOWN


def test_kleene_shortcuts():
    # A definite false/true side dominates an unknown one.
    assert parse_expression("lookup(x) > 0 and false").eval(Ctx()) is False
    assert parse_expression("lookup(x) > 0 or true").eval(Ctx()) is True
    assert parse_expression("lookup(x) > 0 or false").eval(Ctx()) is UNKNOWN


def test_node_state_predicates():
    e = parse_expression("finished(n1) and not failed(n2)")
    assert e.eval(Ctx(states={"n1": "finished", "n2": "executing"})) is True
    assert e.eval(Ctx(states={"n1": "waiting", "n2": "executing"})) is False


def test_variables():
    e = parse_expression("var(x) + 1 == 3")
    assert e.eval(Ctx(variables={"x": 2})) is True
    assert e.eval(Ctx()) is UNKNOWN


def test_unary_minus_and_division():
    assert parse_expression("-2 < -1").eval(Ctx()) is True
    assert parse_expression("4 / 2 == 2").eval(Ctx()) is True
    # Division by zero degrades to UNKNOWN rather than raising mid-run.
    assert parse_expression("4 / 0 == 2").eval(Ctx()) is UNKNOWN


def test_syntax_error_carries_location():
    with pytest.raises(ExpressionError) as err:
        parse_expression("lookup(a) >")
    assert err.value.line == 1


def test_reference_collection():
    e = parse_expression("lookup(a.b) > 1 and finished(nodeX) or lookup(c) == 0")
    assert referenced_parameters(e) == {"a.b", "c"}
    assert referenced_nodes(e) == {"nodeX"}


def test_time_reference():
    assert parse_expression("time >= 100").eval(Ctx(time=100)) is True
    assert parse_expression("time >= 100").eval(Ctx(time=99.5)) is False
