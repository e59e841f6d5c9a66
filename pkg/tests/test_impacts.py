import random

import pytest

from habvsm.impacts import (
    ComponentGraph,
    GraphError,
    impact_report,
    impact_set,
    parse_graph_lines,
    redundancy,
    zero_fault_tolerant,
)

from oracles import maxflow_redundancy, reachability_lost_pairs


def diamond():
    return ComponentGraph(
        nodes={"S", "A", "B", "C"},
        edges=[("S", "A"), ("S", "B"), ("A", "C"), ("B", "C")],
        sources={"f": {"S"}},
        consumers=[("f", "C")],
    )


def chain():
    return ComponentGraph(
        nodes={"S", "A", "B"},
        edges=[("S", "A"), ("A", "B")],
        sources={"f": {"S"}},
        consumers=[("f", "B")],
    )


def test_chain_failure_loses_downstream():
    lost = impact_set(chain(), {"A"})
    assert ("B", "f") in lost
    assert ("A", "f") in lost  # the failed component itself no longer receives


def test_leaf_failure_loses_only_leaf():
    lost = impact_set(chain(), {"B"})
    assert lost == {("B", "f")}


def test_diamond_survives_single_branch_failure():
    lost = impact_set(diamond(), {"A"})
    assert ("C", "f") not in lost
    assert lost == {("A", "f")}


def test_unknown_component_raises():
    with pytest.raises(GraphError):
        impact_set(chain(), {"ghost"})


def test_redundancy_diamond_and_chain():
    assert redundancy(diamond(), "f", "C") == 2
    assert redundancy(chain(), "f", "B") == 1


def test_redundancy_disconnected_consumer():
    g = ComponentGraph(
        nodes={"S", "X"},
        edges=[],
        sources={"f": {"S"}},
        consumers=[("f", "X")],
    )
    assert redundancy(g, "f", "X") == 0


def test_zft_diamond_after_branch_failure():
    g = diamond()
    assert zero_fault_tolerant(g, {"A"}) == {("f", "C")}
    assert zero_fault_tolerant(g, set()) == set()


def test_triple_redundancy_not_zft_after_one_failure():
    g = ComponentGraph(
        nodes={"S", "A", "B", "C", "D", "E", "T"},
        edges=[("S", "A"), ("S", "B"), ("S", "C"), ("A", "T"), ("B", "T"), ("C", "T"),
               ("S", "D"), ("D", "E")],
        sources={"f": {"S"}},
        consumers=[("f", "T")],
    )
    assert redundancy(g, "f", "T") == 3
    assert zero_fault_tolerant(g, {"A"}) == set()
    assert redundancy(g, "f", "T", removed={"A"}) == 2


def test_multi_source_merged_super_source():
    g = ComponentGraph(
        nodes={"S1", "S2", "M", "T"},
        edges=[("S1", "M"), ("S2", "M"), ("M", "T")],
        sources={"f": {"S1", "S2"}},
        consumers=[("f", "T")],
    )
    # Both paths squeeze through M, so one M failure kills the function.
    assert redundancy(g, "f", "T") == 1


def test_monotonicity_of_impacts():
    g = diamond()
    small = impact_set(g, {"A"})
    big = impact_set(g, {"A", "B"})
    assert small <= big
    assert ("C", "f") in big


def test_impact_report_fields():
    report = impact_report(diamond(), {"A"})
    assert report.failed == {"A"}
    assert report.zft == {("f", "C")}
    assert report.redundancy == {"f@C": 1}
    assert ("A", "f") in report.lost


def _random_graph(rng):
    n = rng.randint(4, 20)
    nodes = {f"n{i}" for i in range(n)}
    edges = []
    node_list = sorted(nodes)
    for a in node_list:
        for b in node_list:
            if a != b and rng.random() < 0.15:
                edges.append((a, b))
    n_funcs = rng.randint(1, 3)
    sources = {}
    consumers = []
    for f in range(n_funcs):
        srcs = set(rng.sample(node_list, rng.randint(1, 2)))
        sources[f"f{f}"] = srcs
        consumers.append((f"f{f}", rng.choice(node_list)))
    return ComponentGraph(nodes, edges, sources, consumers)


def test_reachability_oracle_on_random_graphs():
    rng = random.Random(4242)
    for _ in range(60):
        g = _random_graph(rng)
        failed = set(rng.sample(sorted(g.nodes), rng.randint(0, 3)))
        assert impact_set(g, failed) == reachability_lost_pairs(g, failed)


def test_flow_oracle_on_random_graphs():
    rng = random.Random(777)
    for _ in range(60):
        g = _random_graph(rng)
        failed = set(rng.sample(sorted(g.nodes), rng.randint(0, 2)))
        for fn, consumer in g.consumers:
            got = redundancy(g, fn, consumer, removed=failed)
            expected = maxflow_redundancy(g, fn, consumer, removed=failed)
            assert got == expected, (fn, consumer, failed)


def test_graph_section_parsing():
    g = parse_graph_lines(
        [
            "edge solar -> pcu",
            "edge battery -> pcu",
            "edge pcu -> bus1",
            "source power @ solar",
            "source power @ battery",
            "consumer power @ bus1",
        ]
    )
    assert redundancy(g, "power", "bus1") == 1  # both paths share pcu
    assert impact_set(g, {"pcu"}) == {("pcu", "power"), ("bus1", "power")}
