import random

import pytest

from habvsm.expressions import UNKNOWN, parse_expression
from habvsm.modes import (
    Candidate,
    CandidateSet,
    ComponentModel,
    ExhaustedError,
    ModeEstimationError,
    TransitionModel,
    advance,
    best_diagnosis,
    init,
    parse_transition_model,
)
from habvsm.simulation import Command, SensorFrame


def frame(values, cycle=1, stale=None):
    staleness = {k: False for k in values}
    staleness.update(stale or {})
    return SensorFrame(cycle, float(cycle), values, staleness)


def switch_model(cid="sw1", param="sw1.power_w", threshold=10.0):
    """Commandable switch; stuck modes look like the matching healthy mode."""
    return ComponentModel(
        id=cid,
        modes=["on", "off", "stuck_on", "stuck_off"],
        nominal={("on", "OFF"): "off", ("off", "ON"): "on"},
        faults={
            "on": ["stuck_on", "stuck_off"],
            "off": ["stuck_on", "stuck_off"],
        },
        observations={
            "on": parse_expression(f"lookup({param}) > {threshold}"),
            "off": parse_expression(f"lookup({param}) < {threshold}"),
            "stuck_on": parse_expression(f"lookup({param}) > {threshold}"),
            "stuck_off": parse_expression(f"lookup({param}) < {threshold}"),
        },
    )


def valve_model(cid, param):
    """Valve whose leak mode sits in its own observation band, so any fault
    is observationally distinct the moment it occurs."""
    return ComponentModel(
        id=cid,
        modes=["open", "closed", "leaking"],
        nominal={("open", "CLOSE"): "closed", ("closed", "OPEN"): "open"},
        faults={"open": ["leaking"], "closed": ["leaking"]},
        observations={
            "open": parse_expression(f"lookup({param}) > 8"),
            "closed": parse_expression(f"lookup({param}) < 2"),
            "leaking": parse_expression(f"lookup({param}) > 3 and lookup({param}) < 7"),
        },
    )


def model_1():
    return TransitionModel({"sw1": switch_model()})


def test_init_single_candidate():
    cs = init(model_1(), {"sw1": "off"})
    assert cs.candidates == [Candidate(("off",), 0)]


def test_init_unknown_mode_fans_out():
    cs = init(model_1(), {"sw1": None})
    assert len(cs.candidates) == 4
    assert all(c.fault_count == 0 for c in cs.candidates)


def test_init_invalid_mode_raises():
    with pytest.raises(ModeEstimationError):
        init(model_1(), {"sw1": "banana"})


def test_empty_model_raises():
    with pytest.raises(ModeEstimationError):
        TransitionModel({})


def test_nominal_command_tracking():
    m = model_1()
    cs = init(m, {"sw1": "off"})
    cs = advance(m, cs, [Command("set_load", "sw1", "ON")], frame({"sw1.power_w": 50.0}))
    assert cs.candidates == [Candidate(("on",), 0)]


def test_stuck_off_explains_unpowered_after_on_command():
    m = model_1()
    cs = init(m, {"sw1": "off"})
    cs = advance(m, cs, [Command("set_load", "sw1", "ON")], frame({"sw1.power_w": 0.0}))
    assert best_diagnosis(cs) == Candidate(("stuck_off",), 1)


def test_exhausted_when_nothing_explains():
    comp = ComponentModel(
        id="c",
        modes=["on", "off"],
        nominal={("on", "OFF"): "off", ("off", "ON"): "on"},
        faults={},
        observations={
            "on": parse_expression("lookup(p) > 10"),
            "off": parse_expression("lookup(p) > 10"),
        },
    )
    m = TransitionModel({"c": comp})
    cs = init(m, {"c": "off"})
    with pytest.raises(ExhaustedError):
        advance(m, cs, [], frame({"p": 0.0}))


def test_unknown_observation_does_not_prune():
    m = model_1()
    cs = init(m, {"sw1": "on"})
    got = advance(m, cs, [], frame({"sw1.power_w": 50.0}, stale={"sw1.power_w": True}))
    assert got.candidates == [Candidate(("on",), 0)]


def test_best_diagnosis_prefers_fewer_faults_then_lex():
    cs = CandidateSet([Candidate(("c",), 0), Candidate(("a",), 1), Candidate(("b",), 1)])
    assert best_diagnosis(cs) == Candidate(("c",), 0)
    cs2 = CandidateSet([Candidate(("a",), 1), Candidate(("b",), 1)])
    assert best_diagnosis(cs2) == Candidate(("a",), 1)


def test_nominal_fidelity_zero_fault_survives():
    m = TransitionModel({"sw1": switch_model("sw1", "p1"), "sw2": switch_model("sw2", "p2")})
    cs = init(m, {"sw1": "off", "sw2": "off"})
    rng = random.Random(5)
    powered = {"sw1": False, "sw2": False}
    for cycle in range(1, 15):
        cmds = []
        if rng.random() < 0.5:
            target = rng.choice(["sw1", "sw2"])
            to = rng.choice(["ON", "OFF"])
            cmds.append(Command("set_load", target, to))
            powered[target] = to == "ON"
        values = {"p1": 50.0 if powered["sw1"] else 0.0, "p2": 50.0 if powered["sw2"] else 0.0}
        cs = advance(m, cs, cmds, frame(values, cycle))
        assert any(c.fault_count == 0 for c in cs.candidates)


# -- brute-force history enumeration oracle (standalone re-implementation) ----


def _oracle_consistent(model, assignment, frm):
    class Ctx:
        def lookup(self, param):
            if param not in frm.values or frm.staleness.get(param, False):
                return UNKNOWN
            return frm.values[param]

        def now_s(self):
            return frm.sim_time_s

        def node_state(self, node_id):
            return "inactive"

        def variable(self, name):
            return UNKNOWN

    ctx = Ctx()
    for cid, mode in zip(model.component_ids, assignment):
        predicate = model.components[cid].observations.get(mode)
        if predicate is not None and predicate.eval(ctx) is False:
            return False
    return True


def oracle_enumerate(model, initial, steps, per_step_faults=2, total_faults=16):
    """Minimum fault count per final assignment, over every command/fault
    history consistent with every frame."""
    ids = model.component_ids
    states = {(tuple(initial[c] for c in ids)): 0}
    for commands, frm in steps:
        candidates: dict[tuple, int] = {}
        for assignment, used in states.items():
            modes = list(assignment)
            for cmd in commands:
                if cmd.target in model.components:
                    idx = ids.index(cmd.target)
                    dest = model.components[cmd.target].nominal.get((modes[idx], cmd.value))
                    if dest is not None:
                        modes[idx] = dest
            layer = {tuple(modes): used}
            frontier = {tuple(modes): used}
            for _ in range(per_step_faults):
                grown: dict[tuple, int] = {}
                for a, n in frontier.items():
                    if n >= total_faults:
                        continue
                    for idx, cid in enumerate(ids):
                        for dest in model.components[cid].faults.get(a[idx], []):
                            mod = list(a)
                            mod[idx] = dest
                            key = tuple(mod)
                            if key not in layer or layer[key] > n + 1:
                                grown[key] = min(grown.get(key, n + 1), n + 1)
                frontier = grown
                for k, v in grown.items():
                    if k not in layer or layer[k] > v:
                        layer[k] = v
            for a, n in layer.items():
                if _oracle_consistent(model, a, frm):
                    if a not in candidates or n < candidates[a]:
                        candidates[a] = n
        states = candidates
        if not states:
            return None
    return states


def test_oracle_full_equality_on_distinct_band_models():
    """With observationally distinct fault modes, the incremental candidate
    set equals exhaustive history enumeration exactly."""
    m = TransitionModel({"v1": valve_model("v1", "f1"), "v2": valve_model("v2", "f2")})
    rng = random.Random(31337)
    for trial in range(100):
        init_modes = {"v1": "closed", "v2": "closed"}
        cs = init(m, init_modes)
        steps = []
        ok = True
        for cycle in range(1, rng.randint(2, 10)):
            cmds = []
            if rng.random() < 0.6:
                cmds.append(
                    Command("set_load", rng.choice(["v1", "v2"]), rng.choice(["OPEN", "CLOSE"]))
                )
            values = {"f1": rng.choice([0.0, 5.0, 10.0]), "f2": rng.choice([0.0, 5.0, 10.0])}
            frm = frame(values, cycle)
            steps.append((cmds, frm))
            try:
                cs = advance(m, cs, cmds, frm)
            except ExhaustedError:
                ok = False
                break
        expected = oracle_enumerate(m, init_modes, steps)
        if not ok:
            assert not expected
            continue
        got = {c.assignment: c.fault_count for c in cs.candidates}
        assert got == expected, (trial, steps)


def test_oracle_minimal_layer_on_masked_fault_models():
    """Stuck modes are observationally identical to healthy ones, so latent
    faults are legal histories; the estimator must still agree on the
    minimum-fault explanations."""
    m = TransitionModel({"sw1": switch_model("sw1", "p1"), "sw2": switch_model("sw2", "p2")})
    rng = random.Random(2024)
    for trial in range(100):
        init_modes = {"sw1": "off", "sw2": "off"}
        cs = init(m, init_modes)
        steps = []
        ok = True
        for cycle in range(1, rng.randint(2, 9)):
            cmds = []
            if rng.random() < 0.6:
                cmds.append(
                    Command("set_load", rng.choice(["sw1", "sw2"]), rng.choice(["ON", "OFF"]))
                )
            values = {"p1": rng.choice([0.0, 50.0]), "p2": rng.choice([0.0, 50.0])}
            frm = frame(values, cycle)
            steps.append((cmds, frm))
            try:
                cs = advance(m, cs, cmds, frm)
            except ExhaustedError:
                ok = False
                break
        expected = oracle_enumerate(m, init_modes, steps)
        if not ok:
            assert not expected
            continue
        assert expected
        got = {c.assignment: c.fault_count for c in cs.candidates}
        min_expected = min(expected.values())
        assert min(got.values()) == min_expected
        assert {a for a, n in got.items() if n == min_expected} == {
            a for a, n in expected.items() if n == min_expected
        }


def test_candidate_ordering_deterministic():
    m = TransitionModel({"sw1": switch_model("sw1", "p1"), "sw2": switch_model("sw2", "p2")})

    def run():
        cs = init(m, {"sw1": "on", "sw2": "on"})
        cs = advance(m, cs, [], frame({"p1": 0.0, "p2": 50.0}))
        return list(cs.candidates)

    assert run() == run()
    first = run()
    assert first[0] == Candidate(("stuck_off", "on"), 1)


def test_parse_transition_model_file():
    text = """
[component sw1]
modes: on off stuck_off
nominal: off --ON--> on
nominal: on --OFF--> off
fault: on -> stuck_off
fault: off -> stuck_off
observe on: lookup(sw1.power_w) > 10
observe off: lookup(sw1.power_w) < 10
observe stuck_off: lookup(sw1.power_w) < 10
"""
    m = parse_transition_model(text)
    assert m.component_ids == ["sw1"]
    comp = m.components["sw1"]
    assert comp.nominal[("off", "ON")] == "on"
    assert comp.faults["on"] == ["stuck_off"]
    cs = init(m, {"sw1": "off"})
    cs = advance(m, cs, [Command("set_load", "sw1", "ON")], frame({"sw1.power_w": 0.0}))
    assert best_diagnosis(cs).assignment == ("stuck_off",)
