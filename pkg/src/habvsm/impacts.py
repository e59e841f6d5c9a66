"""Function-loss and redundancy reasoning over a component interconnection graph.

Capabilities (power, data, ...) flow from declared source components along
directed edges. A confirmed failure removes its components from the graph:
anything that loses every path from a function's sources has lost that
function. Redundancy is counted as the maximum number of internally
vertex-disjoint paths from the function's sources (merged into one virtual
super-source) to the consumer, so a count of 1 means one more component
failure can eliminate the function.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field


class GraphError(Exception):
    pass


@dataclass
class ComponentGraph:
    nodes: set[str]
    edges: list[tuple[str, str]]
    sources: dict[str, set[str]]  # function -> source components
    consumers: list[tuple[str, str]] = field(default_factory=list)  # (function, consumer)

    def __post_init__(self):
        for a, b in self.edges:
            if a not in self.nodes or b not in self.nodes:
                raise GraphError(f"edge {a}->{b} references unknown node")
        for fn, srcs in self.sources.items():
            if not srcs:
                raise GraphError(f"function {fn!r} has no sources")
            for s in srcs:
                if s not in self.nodes:
                    raise GraphError(f"source {s!r} of {fn!r} is not a node")
        for fn, consumer in self.consumers:
            if fn not in self.sources:
                raise GraphError(f"consumer references unknown function {fn!r}")
            if consumer not in self.nodes:
                raise GraphError(f"consumer node {consumer!r} unknown")
        self._succ: dict[str, list[str]] = {n: [] for n in self.nodes}
        for a, b in self.edges:
            self._succ[a].append(b)

    def reachable_from(self, starts: set[str], removed: set[str]) -> set[str]:
        seen = set(s for s in starts if s not in removed)
        queue = deque(seen)
        while queue:
            node = queue.popleft()
            for nxt in self._succ[node]:
                if nxt not in removed and nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        return seen


@dataclass(frozen=True)
class ImpactReport:
    failed: frozenset[str]
    lost: frozenset[tuple[str, str]]  # (component, function) no longer supplied
    zft: frozenset[tuple[str, str]]  # (function, consumer) newly down to one path
    redundancy: dict[str, int]  # "function@consumer" -> remaining disjoint paths


def impact_set(graph: ComponentGraph, failed: set[str]) -> set[tuple[str, str]]:
    """(component, function) pairs supplied before the failure but not after."""
    for f in failed:
        if f not in graph.nodes:
            raise GraphError(f"unknown component {f!r}")
    lost: set[tuple[str, str]] = set()
    for fn in sorted(graph.sources):
        before = graph.reachable_from(graph.sources[fn], set())
        after = graph.reachable_from(graph.sources[fn], set(failed))
        for component in before - after:
            lost.add((component, fn))
    return lost


def redundancy(graph: ComponentGraph, function: str, consumer: str, removed: set[str] | None = None) -> int:
    """Maximum internally vertex-disjoint source-to-consumer paths.

    Computed as max flow on the node-split graph: intermediate vertices get
    capacity 1, sources and the consumer are uncapacitated endpoints.
    """
    if consumer not in graph.nodes:
        raise GraphError(f"unknown consumer {consumer!r}")
    if function not in graph.sources:
        raise GraphError(f"unknown function {function!r}")
    removed = removed or set()
    sources = {s for s in graph.sources[function] if s not in removed}
    if consumer in removed or not sources:
        return 0
    if consumer in sources:
        return len(graph.nodes)  # self-supplied; no single extra failure can cut it

    # Build split graph with integer capacities as adjacency dicts.
    INF = len(graph.nodes) + len(graph.edges) + 1
    cap: dict[str, dict[str, int]] = {}

    def add_edge(u: str, v: str, c: int) -> None:
        cap.setdefault(u, {})[v] = cap.setdefault(u, {}).get(v, 0) + c
        cap.setdefault(v, {}).setdefault(u, 0)

    super_source = "\x00S"
    for node in graph.nodes:
        if node in removed:
            continue
        vertex_cap = INF if (node in sources or node == consumer) else 1
        add_edge(f"{node}/in", f"{node}/out", vertex_cap)
    for a, b in graph.edges:
        if a in removed or b in removed:
            continue
        add_edge(f"{a}/out", f"{b}/in", 1)
    for s in sources:
        add_edge(super_source, f"{s}/in", INF)
    sink = f"{consumer}/out"

    # Edmonds-Karp; path counts here are tiny.
    flow = 0
    while True:
        parent: dict[str, str] = {super_source: super_source}
        queue = deque([super_source])
        while queue and sink not in parent:
            u = queue.popleft()
            for v, c in cap.get(u, {}).items():
                if c > 0 and v not in parent:
                    parent[v] = u
                    queue.append(v)
        if sink not in parent:
            return flow
        bottleneck = INF
        v = sink
        while v != super_source:
            u = parent[v]
            bottleneck = min(bottleneck, cap[u][v])
            v = u
        v = sink
        while v != super_source:
            u = parent[v]
            cap[u][v] -= bottleneck
            cap[v][u] += bottleneck
            v = u
        flow += bottleneck


def zero_fault_tolerant(graph: ComponentGraph, failed: set[str]) -> set[tuple[str, str]]:
    """Declared (function, consumer) pairs pushed from >=2 disjoint paths to exactly 1."""
    result: set[tuple[str, str]] = set()
    for fn, consumer in graph.consumers:
        before = redundancy(graph, fn, consumer)
        if before < 2:
            continue
        if redundancy(graph, fn, consumer, removed=set(failed)) == 1:
            result.add((fn, consumer))
    return result


def impact_report(graph: ComponentGraph, failed: set[str]) -> ImpactReport:
    lost = impact_set(graph, failed)
    zft = zero_fault_tolerant(graph, failed)
    remaining = {
        f"{fn}@{consumer}": redundancy(graph, fn, consumer, removed=set(failed))
        for fn, consumer in graph.consumers
    }
    return ImpactReport(
        failed=frozenset(failed),
        lost=frozenset(lost),
        zft=frozenset(zft),
        redundancy=remaining,
    )


# -- [graph] section parsing -------------------------------------------------
#
#   edge a -> b
#   source function @ node
#   consumer function @ node


def parse_graph_lines(lines: list[str], path: str = "") -> ComponentGraph:
    from .simulation import ModelFileError

    nodes: set[str] = set()
    edges: list[tuple[str, str]] = []
    sources: dict[str, set[str]] = {}
    consumers: list[tuple[str, str]] = []
    for lineno, line in enumerate(lines, start=1):
        parts = line.split()
        if parts[0] == "edge" and len(parts) == 4 and parts[2] == "->":
            nodes.update((parts[1], parts[3]))
            edges.append((parts[1], parts[3]))
        elif parts[0] == "source" and len(parts) == 4 and parts[2] == "@":
            nodes.add(parts[3])
            sources.setdefault(parts[1], set()).add(parts[3])
        elif parts[0] == "consumer" and len(parts) == 4 and parts[2] == "@":
            nodes.add(parts[3])
            consumers.append((parts[1], parts[3]))
        else:
            raise ModelFileError(f"malformed graph line: {line!r}", path, lineno)
    try:
        return ComponentGraph(nodes, edges, sources, consumers)
    except GraphError as exc:
        raise ModelFileError(str(exc), path) from exc
