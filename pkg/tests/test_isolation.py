import random

import pytest

from habvsm.isolation import (
    FAIL,
    PASS,
    UNKNOWN_OUTCOME,
    AmbiguityGroup,
    DebouncedDetector,
    DMatrix,
    IsolationError,
    ModeDef,
    TestDef,
    TestResults,
    Verdict,
    parse_dmatrix_sections,
)
from habvsm.simulation import SensorFrame

from oracles import brute_force_min_hitting_sets, consistent_single_modes


def dm(tests_spec):
    """tests_spec: list of (test_id, covers set). Modes inferred."""
    modes = sorted({m for _, covers in tests_spec for m in covers})
    tests = [
        TestDef(tid, f"p_{tid}", 0.0, 1.0, frozenset(covers)) for tid, covers in tests_spec
    ]
    return DMatrix([ModeDef(m) for m in modes], tests)


def results(dmatrix, **outcomes):
    full = {t: outcomes.get(t, PASS) for t in dmatrix.test_ids}
    return TestResults(full)


def frame(values, stale=None):
    return SensorFrame(1, 1.0, values, stale or {k: False for k in values})


def test_evaluate_closed_interval_boundaries():
    d = DMatrix([ModeDef("m")], [TestDef("t", "p", 10.0, 20.0, frozenset({"m"}))])
    assert d.evaluate_tests(frame({"p": 10.0})).outcomes["t"] == PASS
    assert d.evaluate_tests(frame({"p": 20.0})).outcomes["t"] == PASS
    assert d.evaluate_tests(frame({"p": 20.0001})).outcomes["t"] == FAIL
    assert d.evaluate_tests(frame({"p": 9.9999})).outcomes["t"] == FAIL


def test_evaluate_stale_and_missing_are_unknown():
    d = DMatrix([ModeDef("m")], [TestDef("t", "p", 0, 1, frozenset({"m"}))])
    assert d.evaluate_tests(frame({"p": 0.5}, {"p": True})).outcomes["t"] == UNKNOWN_OUTCOME
    assert d.evaluate_tests(frame({"q": 0.5}, {"q": False})).outcomes["t"] == UNKNOWN_OUTCOME
    assert d.missing_parameters(frame({"q": 0.5}, {"q": False})) == ["p"]


def test_isolate_exoneration_example():
    d = dm([("T1", {"A", "B"}), ("T2", {"B"})])
    r = d.isolate(results(d, T1=FAIL, T2=PASS))
    assert r.verdict == Verdict.GROUP
    assert r.group == AmbiguityGroup(frozenset({"A"}))
    assert r.group.exact


def test_isolate_ambiguity_group():
    d = dm([("T1", {"A", "B"}), ("T2", {"C"})])
    r = d.isolate(results(d, T1=FAIL, T2=PASS))
    assert r.group.modes == {"A", "B"}
    assert not r.group.exact


def test_isolate_no_fault_and_inconsistent():
    d = dm([("T1", {"A"}), ("T2", {"B"})])
    assert d.isolate(results(d)).verdict == Verdict.NO_FAULT
    # Both fail: no single mode is in both covers.
    assert d.isolate(results(d, T1=FAIL, T2=FAIL)).verdict == Verdict.INCONSISTENT


def test_unknown_constrains_nothing():
    d = dm([("T1", {"A", "B"}), ("T2", {"B"})])
    r = d.isolate(results(d, T1=FAIL, T2=UNKNOWN_OUTCOME))
    assert r.group.modes == {"A", "B"}


def test_monotone_exoneration():
    d = dm([("T1", {"A", "B", "C"}), ("T2", {"B"}), ("T3", {"C"})])
    loose = d.isolate(results(d, T1=FAIL, T2=UNKNOWN_OUTCOME, T3=UNKNOWN_OUTCOME))
    tighter = d.isolate(results(d, T1=FAIL, T2=PASS, T3=UNKNOWN_OUTCOME))
    assert tighter.group.modes <= loose.group.modes


def test_multi_fault_hand_example():
    d = dm([("T1", {"A", "B"}), ("T2", {"C"})])
    diagnoses = d.isolate_multi(results(d, T1=FAIL, T2=FAIL))
    assert set(diagnoses) == {frozenset({"A", "C"}), frozenset({"B", "C"})}


def test_multi_fault_exonerated_residual_empty():
    d = dm([("T1", {"B"}), ("T2", {"B"})])
    # T1 fails but its only cover is exonerated by passing T2: model conflict.
    assert d.isolate_multi(results(d, T1=FAIL, T2=PASS)) == []


def test_signature_and_soundness():
    d = dm([("T1", {"A", "B"}), ("T2", {"B"}), ("T3", {"A", "C"})])
    sig = d.signature("A")
    assert sig.outcomes == {"T1": FAIL, "T2": PASS, "T3": FAIL}
    for mode in d.mode_ids:
        r = d.isolate(d.signature(mode))
        assert r.verdict == Verdict.GROUP
        assert mode in r.group.modes


def test_signature_unknown_mode_raises():
    d = dm([("T1", {"A"})])
    with pytest.raises(IsolationError):
        d.signature("nope")


def test_undetectable_mode_flagged():
    d = DMatrix([ModeDef("A"), ModeDef("B")], [TestDef("T1", "p", 0, 1, frozenset({"A"}))])
    assert d.undetectable == {"B"}


def test_oracle_equivalence_randomized():
    rng = random.Random(12345)
    for trial in range(60):
        n_tests = rng.randint(1, 30)
        n_modes = rng.randint(1, 40)
        modes = [f"m{i}" for i in range(n_modes)]
        tests_spec = []
        for ti in range(n_tests):
            covers = {m for m in modes if rng.random() < 0.25}
            if not covers:
                covers = {rng.choice(modes)}
            tests_spec.append((f"t{ti}", covers))
        d = dm(tests_spec)
        outcomes = {
            t: rng.choice([PASS, FAIL, UNKNOWN_OUTCOME]) for t in d.test_ids
        }
        r = d.isolate(TestResults(outcomes))
        expected = consistent_single_modes(
            d.mode_ids, {t.id: set(t.covers) for t in d.tests}, outcomes
        )
        if not any(o == FAIL for o in outcomes.values()):
            assert r.verdict == Verdict.NO_FAULT
        elif not expected:
            assert r.verdict == Verdict.INCONSISTENT
        else:
            assert r.verdict == Verdict.GROUP
            assert r.group.modes == expected


def test_hitting_set_minimality_randomized():
    rng = random.Random(999)
    for trial in range(40):
        n_modes = rng.randint(3, 12)
        modes = [f"m{i}" for i in range(n_modes)]
        n_fail = rng.randint(2, 4)
        fail_sets = []
        for _ in range(n_fail):
            s = {m for m in modes if rng.random() < 0.4} or {rng.choice(modes)}
            fail_sets.append(s)
        tests_spec = [(f"t{i}", fs) for i, fs in enumerate(fail_sets)]
        d = dm(tests_spec)
        outcomes = {f"t{i}": FAIL for i in range(n_fail)}
        got = d.isolate_multi(TestResults(outcomes), max_cardinality=3)
        universe = set().union(*fail_sets)
        expected = brute_force_min_hitting_sets(fail_sets, universe, 3)
        assert set(got) == set(expected)
        for diagnosis in got:
            assert all(diagnosis & fs for fs in fail_sets)
            for drop in diagnosis:
                smaller = diagnosis - {drop}
                assert not all(smaller & fs for fs in fail_sets) or not smaller


def test_debounce_confirms_after_k_frames():
    d = DMatrix([ModeDef("m")], [TestDef("t", "p", 0.0, 1.0, frozenset({"m"}))])
    det = DebouncedDetector(d, debounce_frames=3)
    outs = []
    for i in range(5):
        value = 5.0 if i >= 1 else 0.5  # fault appears at frame index 1
        _, confirmed = det.update(frame({"p": value}))
        outs.append(confirmed.outcomes["t"])
    # frames 1 and 2 are unconfirmed (UNKNOWN), frame 3 is the 3rd consecutive FAIL
    assert outs == [PASS, UNKNOWN_OUTCOME, UNKNOWN_OUTCOME, FAIL, FAIL]


def test_debounce_reset_on_pass():
    d = DMatrix([ModeDef("m")], [TestDef("t", "p", 0.0, 1.0, frozenset({"m"}))])
    det = DebouncedDetector(d, debounce_frames=2)
    det.update(frame({"p": 9.0}))
    _, confirmed = det.update(frame({"p": 0.5}))
    assert confirmed.outcomes["t"] == PASS
    _, confirmed = det.update(frame({"p": 9.0}))
    assert confirmed.outcomes["t"] == UNKNOWN_OUTCOME  # streak restarted


def test_model_file_roundtrip():
    text = """
[modes]
load1.stuck_on
load1.degraded_draw draw_multiplier=1.6 sched_effect=degraded
[tests]
t1, load1.power_residual_w, -3.0, 3.0, covers=load1.stuck_on|load1.degraded_draw
t2, load1.mode_residual, -0.5, 0.5, covers=load1.stuck_on
[graph]
edge a -> b
source power @ a
consumer power @ b
"""
    d, graph_lines = parse_dmatrix_sections(text)
    assert d.mode_ids == ["load1.stuck_on", "load1.degraded_draw"]
    assert d.covers("t1") == {"load1.stuck_on", "load1.degraded_draw"}
    assert d.metadata("load1.degraded_draw")["draw_multiplier"] == 1.6
    assert len(graph_lines) == 3
