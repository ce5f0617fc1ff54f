import numpy as np
from django.test import SimpleTestCase

from flownet.control import InflowProfile, InformationPolicy, optimal_inflow_profile
from flownet.damping import DampingShape
from flownet.demand import JacobiDemandSpec, conditional_mean
from flownet.exceptions import CouplingError, DomainError, GridError, NumericsError
from flownet.network import DEMAND, JUNCTION, SOURCE, ArcSpec, Node, TreeNetwork
from flownet.pde import (
    ArcGrid, ArcState, build_arc_grid, build_grids, cell_count, simulate_network, simulate_network_stepwise, step_arc,
)
from flownet.timefuncs import TimeFunction

ONE = TimeFunction.const(1.0)
DEMAND_V2 = JacobiDemandSpec("v2", 1.0, TimeFunction.sinusoid(0.5, 0.2, 1.0), 0.3, 0.3)


def single_arc(velocity=ONE, damping_factor=None, shape=None):
    net = TreeNetwork(
        [Node("v0", SOURCE), Node("v1", DEMAND)],
        [ArcSpec("1", "v0", "v1", velocity, damping_factor or TimeFunction.const(0.0), shape or DampingShape.none())],
    )
    net.validate()
    return net


def tree_1_1(shape):
    net = TreeNetwork(
        [Node("v0", SOURCE), Node("v1", JUNCTION), Node("v2", DEMAND)],
        [ArcSpec("1", "v0", "v1", ONE, ONE, shape), ArcSpec("2", "v1", "v2", ONE, ONE, shape)],
    )
    net.validate()
    return net


def tree_1_2(velocity, shape, damping_factor=None):
    mu = damping_factor or TimeFunction.sinusoid(1.0, 0.2, 1.0)
    net = TreeNetwork(
        [Node("v0", SOURCE), Node("v1", JUNCTION), Node("v2", DEMAND), Node("v3", DEMAND)],
        [ArcSpec("1", "v0", "v1", velocity, mu, shape), ArcSpec("2", "v1", "v2", velocity, mu, shape),
         ArcSpec("3", "v1", "v3", velocity, mu, shape)],
    )
    net.validate()
    return net


def fixed_split(arc_id, times):
    return np.full(np.shape(times), 0.4 if arc_id == "2" else 0.6)


def profile_on(times, values):
    return InflowProfile(times, np.asarray(values, dtype=float), np.zeros(times.size, dtype=int), (0.0,))


class GridTests(SimpleTestCase):
    def test_cell_count(self):
        self.assertEqual(cell_count(1.0, 0.1), 10)
        self.assertEqual(cell_count(2.0, 0.005), 400)

    def test_dx_must_divide_the_length(self):
        with self.assertRaises(GridError):
            cell_count(1.0, 0.3)
        with self.assertRaises(GridError):
            cell_count(1.0, 0.0)

    def test_time_steps_meet_cfl_with_equality(self):
        arc = ArcSpec("1", "v0", "v1", TimeFunction.sinusoid(14.0, 1.0, 2.0))
        grid = build_arc_grid(arc, 0.005, 0.0, 2.5)
        dt = np.diff(grid.times)
        courant = dt * arc.velocity(grid.times[:-1]) / grid.dx
        np.testing.assert_allclose(courant, 1.0, rtol=1e-9)
        self.assertLess(grid.times[-2], 2.5)
        self.assertGreaterEqual(grid.times[-1], 2.5)
        self.assertEqual(grid.n_cells, 200)

    def test_remaining_lengths(self):
        grid = ArcGrid("1", 0.25, 4, np.array([0.0, 0.25]))
        np.testing.assert_allclose(grid.remaining_lengths, [0.75, 0.5, 0.25, 0.0])
        np.testing.assert_allclose(grid.cell_centers, [0.125, 0.375, 0.625, 0.875])


class StepTests(SimpleTestCase):
    def setUp(self):
        self.arc = ArcSpec("a", "v0", "v1", ONE, length=0.3)
        self.grid = ArcGrid("a", 0.1, 3, np.array([0.0, 0.1]))

    def test_courant_one_shifts_by_one_cell(self):
        state = ArcState(0, 0.0, np.array([0.1, 0.2, 0.3]))
        after = step_arc(state, self.grid, self.arc, 0.5)
        np.testing.assert_array_equal(after.z, [0.5, 0.1, 0.2])
        self.assertEqual(after.step, 1)
        self.assertEqual(after.t, 0.1)

    def test_damping_substep(self):
        arc = ArcSpec("a", "v0", "v1", ONE, TimeFunction.const(2.0), DampingShape.monomial(2), length=0.3)
        after = step_arc(ArcState(0, 0.0, np.array([0.1, 0.2, 0.3])), self.grid, arc, 0.2)
        # z - dt * mu * 15 z^2 with dt * mu * 15 = 3
        np.testing.assert_allclose(after.z, [0.2 - 3.0 * 0.04, 0.1 - 3.0 * 0.01, 0.2 - 3.0 * 0.04])

    def test_negative_boundary_flux(self):
        with self.assertRaises(DomainError):
            step_arc(ArcState(0, 0.0, np.zeros(3)), self.grid, self.arc, -1.0)

    def test_cfl_violation(self):
        grid = ArcGrid("a", 0.1, 3, np.array([0.0, 0.2]))
        with self.assertRaises(GridError):
            step_arc(ArcState(0, 0.0, np.zeros(3)), grid, self.arc, 0.0)

    def test_overdamped_step_goes_negative(self):
        arc = ArcSpec("a", "v0", "v1", ONE, TimeFunction.const(20.0), DampingShape.monomial(1), length=0.3)
        with self.assertRaises(NumericsError):
            step_arc(ArcState(0, 0.0, np.array([0.1, 0.2, 0.3])), self.grid, arc, 0.5)


class SimulateTests(SimpleTestCase):
    def test_undamped_arc_delays_the_inflow(self):
        net = single_arc()
        grid = build_grids(net, 0.1, 0.0, 3.0)["1"]
        inflow = np.linspace(0.2, 0.8, grid.times.size)
        sim = simulate_network(net, profile_on(grid.times, inflow), fixed_split, None, 0.0, 3.0, 0.1)
        supply = sim.supplies["v1"]
        np.testing.assert_array_equal(supply.values[:10], 0.0)
        np.testing.assert_array_equal(supply.values[10:], inflow[:-10])
        self.assertEqual(supply.arc_id, "1")

    def test_sweep_matches_stepwise(self):
        velocity = TimeFunction.sinusoid(2.0, 0.5, 2.0)
        for shape in (DampingShape.none(), DampingShape.monomial(1), DampingShape.monomial(3)):
            net = tree_1_2(velocity, shape)
            grids = build_grids(net, 0.05, 0.0, 2.0)
            root = grids["1"].times
            inflow = profile_on(root, 0.1 + 0.05 * np.sin(3.0 * root))
            initial = {arc_id: np.linspace(0.02, 0.1, grid.n_cells) for arc_id, grid in grids.items()}
            sweep = simulate_network(net, inflow, fixed_split, initial, 0.0, 2.0, 0.05, grids=grids)
            stepwise = simulate_network_stepwise(net, inflow, fixed_split, initial, 0.0, 2.0, 0.05, grids=grids)
            for arc_id in grids:
                np.testing.assert_allclose(sweep.outflow[arc_id], stepwise.outflow[arc_id], rtol=1e-12, atol=1e-15,
                                           err_msg=f"{shape.label} arc {arc_id}")
                self.assertEqual(stepwise.fields[arc_id].shape, (grids[arc_id].times.size, grids[arc_id].n_cells))
                self.assertTrue(np.all(stepwise.fields[arc_id] >= 0))
            self.assertEqual(sweep.fields, {})

    def test_junction_conserves_flux(self):
        net = tree_1_2(TimeFunction.const(2.0), DampingShape.monomial(2))
        inflow_times = build_grids(net, 0.05, 0.0, 2.0)["1"].times
        sim = simulate_network(net, profile_on(inflow_times, np.full(inflow_times.size, 0.7)), fixed_split,
                               None, 0.0, 2.0, 0.05)
        np.testing.assert_array_equal(sim.grids["2"].times, sim.grids["1"].times)
        np.testing.assert_allclose(sim.boundary["2"] + sim.boundary["3"], sim.outflow["1"], rtol=1e-14)
        np.testing.assert_array_equal(sim.alphas["3"], 0.6)
        for supply in sim.supplies.values():
            self.assertTrue(np.all(supply.values >= 0))

    def test_coupling_needs_one_alpha_per_time(self):
        net = tree_1_2(TimeFunction.const(2.0), DampingShape.none())
        times = build_grids(net, 0.05, 0.0, 1.0)["1"].times
        with self.assertRaises(CouplingError):
            simulate_network(net, profile_on(times, np.ones(times.size)), lambda arc_id, t: np.ones(3),
                             None, 0.0, 1.0, 0.05)

    def test_initial_data_must_match_cells(self):
        net = single_arc()
        times = build_grids(net, 0.1, 0.0, 1.0)["1"].times
        with self.assertRaises(GridError):
            simulate_network(net, profile_on(times, np.ones(times.size)), fixed_split, {"1": np.zeros(4)},
                             0.0, 1.0, 0.1)
        with self.assertRaises(DomainError):
            simulate_network(net, profile_on(times, np.ones(times.size)), fixed_split, {"1": -np.ones(10)},
                             0.0, 1.0, 0.1)

    def test_overdamped_sweep_raises(self):
        net = single_arc(damping_factor=TimeFunction.const(20.0), shape=DampingShape.monomial(1))
        times = build_grids(net, 0.1, 0.0, 1.0)["1"].times
        with self.assertRaises(NumericsError):
            simulate_network(net, profile_on(times, np.ones(times.size)), fixed_split, None, 0.0, 1.0, 0.1)


class OptimalInflowRoundTripTests(SimpleTestCase):
    def test_undamped_supply_equals_conditional_mean(self):
        net = single_arc()
        spec = JacobiDemandSpec("v1", 1.0, TimeFunction.sinusoid(0.5, 0.2, 1.0), 0.3, 0.3)
        grid = build_grids(net, 0.01, 0.0, 3.0)["1"]
        policy = InformationPolicy.prior({"v1": spec}, 0.0)
        inflow = optimal_inflow_profile(net, {"v1": spec}, policy, grid.times)
        supply = simulate_network(net, inflow, fixed_split, None, 0.0, 3.0, 0.01, grids={"1": grid}).supplies["v1"]
        target = conditional_mean(spec, 0.0, spec.d0, supply.times)
        np.testing.assert_allclose(supply.values[100:], target[100:], rtol=1e-12)

    def test_splitting_error_is_first_order(self):
        shape = DampingShape.monomial(1, 1.0)
        net = tree_1_1(shape)
        policy = InformationPolicy.prior({"v2": DEMAND_V2}, 0.0)
        errors = []
        for dx in (0.02, 0.01):
            grids = build_grids(net, dx, 0.0, 3.0)
            inflow = optimal_inflow_profile(net, {"v2": DEMAND_V2}, policy, grids["1"].times)
            sim = simulate_network(net, inflow, lambda arc_id, t: np.ones_like(t), None, 0.0, 3.0, dx, grids=grids)
            supply = sim.supplies["v2"]
            settled = 2 * grids["2"].n_cells
            target = conditional_mean(DEMAND_V2, 0.0, DEMAND_V2.d0, supply.times[settled:])
            errors.append(np.max(np.abs(supply.values[settled:] - target)))
        ratio = errors[0] / errors[1]
        self.assertGreater(ratio, 1.8)
        self.assertLess(ratio, 2.2)
