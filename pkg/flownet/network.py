"""Directed tree networks: one source, junctions with a single ingoing arc, demand leaves."""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field, replace

import networkx as nx

from .damping import DampingShape
from .exceptions import NetworkValidationError, ValidationRequiredError
from .timefuncs import CoefficientFunction, TimeFunction

logger = logging.getLogger(__name__)

SOURCE = "source"
JUNCTION = "junction"
DEMAND = "demand"
NODE_KINDS = (SOURCE, JUNCTION, DEMAND)


@dataclass(frozen=True)
class Node:
    id: str
    kind: str


@dataclass(frozen=True)
class ArcSpec:
    id: str
    tail: str
    head: str
    velocity: CoefficientFunction
    damping_factor: CoefficientFunction = field(default_factory=lambda: TimeFunction.const(0.0))
    damping_shape: DampingShape = field(default_factory=DampingShape.none)
    length: float = 1.0

    def with_shape(self, shape: DampingShape) -> "ArcSpec":
        return replace(self, damping_shape=shape)


class TreeNetwork:
    """Arcs in declaration order; queries that need the tree shape require validation first."""

    def __init__(self, nodes, arcs):
        self.nodes = tuple(nodes)
        self.arcs = tuple(arcs)
        self._violations = None
        self._graph = None

    def __repr__(self):
        return f"TreeNetwork({len(self.nodes)} nodes, {len(self.arcs)} arcs)"

    def __eq__(self, other):
        return isinstance(other, TreeNetwork) and self.nodes == other.nodes and self.arcs == other.arcs

    __hash__ = None

    # ---------------- structure -----------------
    @property
    def graph(self) -> nx.DiGraph:
        if self._graph is None:
            graph = nx.DiGraph()
            for node in self.nodes:
                graph.add_node(node.id, kind=node.kind)
            for arc in self.arcs:
                graph.add_edge(arc.tail, arc.head, arc_id=arc.id)
            self._graph = graph
        return self._graph

    def kind(self, node_id: str) -> str:
        return self.graph.nodes[node_id].get("kind")

    def arc(self, arc_id: str) -> ArcSpec:
        for arc in self.arcs:
            if arc.id == arc_id:
                return arc
        raise KeyError(arc_id)

    def outgoing(self, node_id: str) -> list[ArcSpec]:
        return [arc for arc in self.arcs if arc.tail == node_id]

    def incoming(self, node_id: str) -> list[ArcSpec]:
        return [arc for arc in self.arcs if arc.head == node_id]

    @property
    def source(self) -> str:
        return next(node.id for node in self.nodes if node.kind == SOURCE)

    @property
    def root_arc(self) -> ArcSpec:
        self.require_valid()
        return self.outgoing(self.source)[0]

    @property
    def demand_nodes(self) -> list[str]:
        return [node.id for node in self.nodes if node.kind == DEMAND]

    @property
    def junctions(self) -> list[str]:
        return [node.id for node in self.nodes if node.kind == JUNCTION]

    def with_damping(self, shape: DampingShape) -> "TreeNetwork":
        variant = TreeNetwork(self.nodes, [arc.with_shape(shape) for arc in self.arcs])
        if self._violations == []:
            variant._violations = []
        return variant

    # ---------------- validation -----------------
    @property
    def is_valid(self) -> bool:
        return self._violations == []

    def validate(self) -> list[str]:
        violations = []
        node_ids = [node.id for node in self.nodes]
        arc_ids = [arc.id for arc in self.arcs]
        for node_id, count in Counter(node_ids).items():
            if count > 1:
                violations.append(f"node {node_id}: declared {count} times")
        for arc_id, count in Counter(arc_ids).items():
            if count > 1:
                violations.append(f"arc {arc_id}: declared {count} times")
        for node in self.nodes:
            if node.kind not in NODE_KINDS:
                violations.append(f"node {node.id}: unknown kind {node.kind!r}")

        known = set(node_ids)
        endpoints_ok = True
        for arc in self.arcs:
            for end in (arc.tail, arc.head):
                if end not in known:
                    violations.append(f"arc {arc.id}: endpoint {end} is not a declared node")
                    endpoints_ok = False
            if not arc.length > 0:
                violations.append(f"arc {arc.id}: length must be positive")
            if arc.velocity.lower_bound() <= 0:
                violations.append(f"arc {arc.id}: velocity is not strictly positive")
            if arc.damping_factor.lower_bound() < 0:
                violations.append(f"arc {arc.id}: damping factor is negative")
        for pair, count in Counter((arc.tail, arc.head) for arc in self.arcs).items():
            if count > 1:
                violations.append(f"arcs {pair[0]}->{pair[1]}: {count} parallel arcs")

        sources = [node.id for node in self.nodes if node.kind == SOURCE]
        if len(sources) != 1:
            violations.append(f"network must have exactly one source, found {len(sources)}")
        if not any(node.kind == DEMAND for node in self.nodes):
            violations.append("network has no demand node")

        if endpoints_ok:
            violations.extend(self._degree_violations())
            violations.extend(self._shape_violations(sources))

        self._violations = violations
        if violations:
            logger.debug("network validation found %s violation(s)", len(violations))
        return list(violations)

    def _degree_violations(self):
        violations = []
        for node in self.nodes:
            n_in = len(self.incoming(node.id))
            n_out = len(self.outgoing(node.id))
            if node.kind == SOURCE:
                if n_in:
                    violations.append(f"source {node.id}: has {n_in} ingoing arc(s)")
                if n_out != 1:
                    violations.append(f"source {node.id}: out-degree {n_out} != 1")
            elif node.kind == JUNCTION:
                if n_in != 1:
                    violations.append(f"junction {node.id}: junction in-degree {n_in} != 1")
                if n_out == 0:
                    violations.append(f"junction {node.id}: has no outgoing arc")
            elif node.kind == DEMAND:
                if n_in != 1:
                    violations.append(f"demand {node.id}: in-degree {n_in} != 1")
                if n_out:
                    violations.append(f"demand {node.id}: demand nodes must be leaves, has {n_out} outgoing arc(s)")
        return violations

    def _shape_violations(self, sources):
        violations = []
        graph = self.graph
        if graph.number_of_nodes() and not nx.is_weakly_connected(graph):
            violations.append("network is not connected")
        if not nx.is_directed_acyclic_graph(graph):
            cycle = nx.find_cycle(graph)
            violations.append("network contains a cycle: " + " -> ".join(str(edge[0]) for edge in cycle))
        if len(sources) == 1:
            unreachable = set(graph.nodes) - nx.descendants(graph, sources[0]) - {sources[0]}
            if unreachable:
                violations.append("nodes unreachable from the source: " + ", ".join(sorted(unreachable)))
        return violations

    def require_valid(self):
        if self._violations is None:
            raise ValidationRequiredError("network must be validated before tree queries")
        if self._violations:
            raise NetworkValidationError(self._violations)


def validate(net: TreeNetwork) -> list[str]:
    """Empty list means ok."""
    return net.validate()


def topological_order(net: TreeNetwork) -> list[str]:
    net.require_valid()
    declared = {node.id: index for index, node in enumerate(net.nodes)}
    return list(nx.lexicographical_topological_sort(net.graph, key=declared.__getitem__))


def arc_order(net: TreeNetwork) -> list[ArcSpec]:
    """Arcs sorted so that every arc follows the arc feeding its tail."""
    order = {node_id: index for index, node_id in enumerate(topological_order(net))}
    return sorted(net.arcs, key=lambda arc: order[arc.tail])


def path_to(net: TreeNetwork, node_id: str) -> list[str]:
    """Arc ids from the source to node_id."""
    net.require_valid()
    nodes = nx.shortest_path(net.graph, net.source, node_id)
    return [net.graph.edges[a, b]["arc_id"] for a, b in zip(nodes[:-1], nodes[1:])]


def root_to_leaf_paths(net: TreeNetwork) -> dict[str, list[str]]:
    """One arc sequence per demand node, in declaration order."""
    net.require_valid()
    return {leaf: path_to(net, leaf) for leaf in net.demand_nodes}
