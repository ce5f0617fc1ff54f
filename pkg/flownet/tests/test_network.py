import random

import numpy as np
from django.test import SimpleTestCase

from flownet.exceptions import NetworkValidationError, ValidationRequiredError
from flownet.network import (
    DEMAND, JUNCTION, SOURCE, ArcSpec, Node, TreeNetwork, arc_order, path_to, root_to_leaf_paths,
    topological_order, validate,
)
from flownet.timefuncs import TimeFunction

ONE = TimeFunction.const(1.0)


def arc(arc_id, tail, head, **kwargs):
    return ArcSpec(arc_id, tail, head, kwargs.pop("velocity", ONE), **kwargs)


def network_1_1():
    return TreeNetwork(
        [Node("v0", SOURCE), Node("v1", JUNCTION), Node("v2", DEMAND)],
        [arc("1", "v0", "v1"), arc("2", "v1", "v2")],
    )


def network_1_2():
    return TreeNetwork(
        [Node("v0", SOURCE), Node("v1", JUNCTION), Node("v2", DEMAND), Node("v3", DEMAND)],
        [arc("1", "v0", "v1"), arc("2", "v1", "v2"), arc("3", "v1", "v3")],
    )


def binary_tree():
    """Source arc into j0, two junctions below it, four demand nodes."""
    return TreeNetwork(
        [Node("s", SOURCE), Node("j0", JUNCTION), Node("j1", JUNCTION), Node("j2", JUNCTION),
         Node("d1", DEMAND), Node("d2", DEMAND), Node("d3", DEMAND), Node("d4", DEMAND)],
        [arc("a", "s", "j0"), arc("b1", "j0", "j1"), arc("b2", "j0", "j2"),
         arc("c1", "j1", "d1"), arc("c2", "j1", "d2"), arc("c3", "j2", "d3"), arc("c4", "j2", "d4")],
    )


def random_tree(rng, size):
    """Source -> root junction, then every new node hangs below a random junction."""
    nodes = [Node("s", SOURCE), Node("j0", JUNCTION)]
    arcs = [arc("a0", "s", "j0")]
    junctions = ["j0"]
    for k in range(1, size):
        parent = rng.choice(junctions)
        nodes.append(Node(f"j{k}", JUNCTION))
        arcs.append(arc(f"a{k}", parent, f"j{k}"))
        junctions.append(f"j{k}")
    for k, junction in enumerate(junctions):
        if not any(a.tail == junction for a in arcs) or rng.random() < 0.3:
            nodes.append(Node(f"d{k}", DEMAND))
            arcs.append(arc(f"b{k}", junction, f"d{k}"))
    rng.shuffle(arcs)
    return TreeNetwork(nodes, arcs)


class ValidateTests(SimpleTestCase):
    def test_reference_topologies(self):
        self.assertEqual(validate(network_1_1()), [])
        self.assertEqual(validate(network_1_2()), [])

    def test_random_trees(self):
        rng = random.Random(5)
        for size in range(1, 30):
            net = random_tree(rng, size)
            self.assertEqual(validate(net), [], msg=f"size {size}")

    def test_junction_with_two_ingoing_arcs(self):
        net = TreeNetwork(
            [Node("v0", SOURCE), Node("v1", JUNCTION), Node("v2", JUNCTION), Node("v3", DEMAND)],
            [arc("1", "v0", "v1"), arc("2", "v1", "v3"), arc("3", "v1", "v2"), arc("4", "v2", "v3")],
        )
        violations = validate(net)
        self.assertTrue(any("in-degree 2" in v for v in violations))

    def test_junction_in_degree_message(self):
        net = TreeNetwork(
            [Node("v0", SOURCE), Node("v1", JUNCTION), Node("v2", JUNCTION), Node("v3", DEMAND)],
            [arc("1", "v0", "v1"), arc("2", "v1", "v3"), arc("3", "v0", "v2"), arc("4", "v1", "v2"),
             arc("5", "v2", "v3")],
        )
        self.assertIn("junction v2: junction in-degree 2 != 1", validate(net))

    def test_cycle(self):
        net = TreeNetwork(
            [Node("v0", SOURCE), Node("v1", JUNCTION), Node("v2", JUNCTION), Node("v3", DEMAND)],
            [arc("1", "v0", "v1"), arc("2", "v1", "v2"), arc("3", "v2", "v1"), arc("4", "v2", "v3")],
        )
        self.assertTrue(any("cycle" in v for v in validate(net)))

    def test_second_source(self):
        net = TreeNetwork(
            [Node("v0", SOURCE), Node("w0", SOURCE), Node("v1", DEMAND), Node("v2", DEMAND)],
            [arc("1", "v0", "v1"), arc("2", "w0", "v2")],
        )
        violations = validate(net)
        self.assertIn("network must have exactly one source, found 2", violations)

    def test_non_positive_velocity(self):
        net = TreeNetwork(
            [Node("v0", SOURCE), Node("v1", DEMAND)],
            [arc("1", "v0", "v1", velocity=TimeFunction.sinusoid(0.5, 1.0, 1.0))],
        )
        self.assertIn("arc 1: velocity is not strictly positive", validate(net))

    def test_velocity_needs_a_positive_amplitude_bound(self):
        # 1 + 1.5 sin(0.1 pi t) stays above 1 on [0, 2] but dips below zero later
        net = TreeNetwork(
            [Node("v0", SOURCE), Node("v1", DEMAND)],
            [arc("1", "v0", "v1", velocity=TimeFunction.sinusoid(1.0, 1.5, 0.1))],
        )
        self.assertGreater(float(net.arcs[0].velocity(np.linspace(0.0, 2.0, 201)).min()), 0.1)
        self.assertIn("arc 1: velocity is not strictly positive", validate(net))

    def test_negative_damping_factor(self):
        net = TreeNetwork(
            [Node("v0", SOURCE), Node("v1", DEMAND)],
            [arc("1", "v0", "v1", damping_factor=TimeFunction.sinusoid(0.1, 0.2, 1.0))],
        )
        self.assertIn("arc 1: damping factor is negative", validate(net))

    def test_reports_every_violation(self):
        net = TreeNetwork(
            [Node("v0", SOURCE), Node("v1", DEMAND), Node("v1", DEMAND)],
            [arc("1", "v0", "v1", length=0.0), arc("2", "v0", "vx")],
        )
        violations = validate(net)
        self.assertGreaterEqual(len(violations), 3)


class QueryTests(SimpleTestCase):
    def test_unvalidated_network(self):
        with self.assertRaises(ValidationRequiredError):
            path_to(network_1_2(), "v2")

    def test_invalid_network(self):
        net = TreeNetwork([Node("v0", SOURCE)], [])
        net.validate()
        with self.assertRaises(NetworkValidationError) as caught:
            topological_order(net)
        self.assertEqual(caught.exception.exit_code, 3)

    def test_paths(self):
        net = network_1_2()
        net.validate()
        self.assertEqual(root_to_leaf_paths(net), {"v2": ["1", "2"], "v3": ["1", "3"]})

    def test_paths_of_a_three_level_tree(self):
        net = binary_tree()
        self.assertEqual(validate(net), [])
        paths = root_to_leaf_paths(net)
        self.assertEqual(len(paths), 4)
        self.assertTrue(all(len(path) == 3 for path in paths.values()))
        self.assertEqual(paths["d3"], ["a", "b2", "c3"])
        self.assertEqual(arc_order(net)[0].id, "a")
        self.assertEqual(net.junctions, ["j0", "j1", "j2"])

    def test_topological_order_follows_declaration(self):
        net = network_1_2()
        net.validate()
        self.assertEqual(topological_order(net), ["v0", "v1", "v2", "v3"])
        self.assertEqual([a.id for a in arc_order(net)], ["1", "2", "3"])

    def test_arc_order_parents_first(self):
        rng = random.Random(11)
        net = random_tree(rng, 12)
        net.validate()
        seen = {net.source}
        for a in arc_order(net):
            self.assertIn(a.tail, seen)
            seen.add(a.head)

    def test_variant_keeps_validation(self):
        from flownet.damping import DampingShape

        net = network_1_2()
        net.validate()
        variant = net.with_damping(DampingShape.monomial(2))
        self.assertTrue(variant.is_valid)
        self.assertTrue(all(a.damping_shape.degree == 2 for a in variant.arcs))
        self.assertTrue(all(a.damping_shape.is_none for a in net.arcs))
