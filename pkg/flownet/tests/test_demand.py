import numpy as np
from django.test import SimpleTestCase
from scipy.integrate import solve_ivp

from flownet.demand import (
    DemandPath, JacobiDemandSpec, conditional_mean, derive_seed, grid_index, sde_grid, simulate_jacobi,
    simulate_jacobi_ensemble,
)
from flownet.exceptions import DomainError, GridError, TimeOrderError
from flownet.timefuncs import TimeFunction

V2 = JacobiDemandSpec("v2", 2.0, TimeFunction.sinusoid(0.45, 0.2, 1.0, 1.0), 0.9, 0.4)
V3 = JacobiDemandSpec("v3", 1.0, TimeFunction.sinusoid(0.5, 0.3, 1.0, -0.5), 0.6, 0.6)


class SeedTests(SimpleTestCase):
    def test_deterministic(self):
        self.assertEqual(derive_seed(20240611, 3), derive_seed(20240611, 3))

    def test_distinct_indices(self):
        seeds = {derive_seed(1, index) for index in range(1000)}
        self.assertEqual(len(seeds), 1000)

    def test_fits_in_64_bits(self):
        for index in range(50):
            self.assertLess(derive_seed(2 ** 63, index), 2 ** 64)


class SpecTests(SimpleTestCase):
    def test_rejects_non_positive_kappa(self):
        with self.assertRaises(DomainError):
            JacobiDemandSpec("v", 0.0, TimeFunction.const(0.5), 0.1, 0.5)

    def test_rejects_initial_demand_outside_unit_interval(self):
        with self.assertRaises(DomainError):
            JacobiDemandSpec("v", 1.0, TimeFunction.const(0.5), 0.1, 1.2)

    def test_theta_range(self):
        self.assertEqual(V2.theta_violations(0.0, 2.5), [])
        high = JacobiDemandSpec("v", 1.0, TimeFunction.sinusoid(0.9, 0.2, 1.0), 0.1, 0.5)
        problems = high.theta_violations(0.0, 2.5)
        self.assertEqual(len(problems), 1)
        self.assertIn("exceeds 1", problems[0])


class GridTests(SimpleTestCase):
    def test_reference_grid(self):
        times = sde_grid(0.0, 2.5, 1e-3)
        self.assertEqual(times.size, 2501)
        self.assertAlmostEqual(times[-1], 2.5, places=12)

    def test_index_on_grid(self):
        times = sde_grid(0.0, 2.5, 1e-3)
        self.assertEqual(grid_index(times, 0.357), 357)

    def test_index_off_grid(self):
        with self.assertRaises(GridError):
            grid_index(sde_grid(0.0, 1.0, 0.01), 0.3333)


class ConditionalMeanTests(SimpleTestCase):
    def test_starts_at_observation(self):
        self.assertAlmostEqual(conditional_mean(V2, 0.4, 0.7, 0.4), 0.7, places=15)

    def test_constant_level(self):
        spec = JacobiDemandSpec("v", 1.5, TimeFunction.const(0.3), 0.2, 0.8)
        expected = 0.3 + (0.8 - 0.3) * np.exp(-1.5 * 0.7)
        self.assertAlmostEqual(conditional_mean(spec, 0.2, 0.8, 0.9), expected, places=14)

    def test_solves_the_mean_ode(self):
        sol = solve_ivp(lambda t, m: V3.kappa * (V3.theta(t) - m), (0.0, 2.5), [V3.d0],
                        method="DOP853", rtol=1e-12, atol=1e-14, dense_output=True)
        t = np.linspace(0.0, 2.5, 26)
        np.testing.assert_allclose(conditional_mean(V3, 0.0, V3.d0, t), sol.sol(t)[0], atol=1e-10)

    def test_semigroup(self):
        middle = conditional_mean(V2, 0.0, 0.4, 0.8)
        direct = conditional_mean(V2, 0.0, 0.4, 1.9)
        self.assertAlmostEqual(conditional_mean(V2, 0.8, middle, 1.9), direct, places=13)

    def test_broadcasts_over_conditioning(self):
        values = conditional_mean(V2, np.array([0.0, 0.5]), np.array([0.4, 0.9]), np.array([1.0, 1.0]))
        self.assertAlmostEqual(values[0], conditional_mean(V2, 0.0, 0.4, 1.0))
        self.assertAlmostEqual(values[1], conditional_mean(V2, 0.5, 0.9, 1.0))

    def test_time_before_conditioning(self):
        with self.assertRaises(TimeOrderError):
            conditional_mean(V2, 1.0, 0.5, 0.5)

    def test_observation_outside_unit_interval(self):
        with self.assertRaises(DomainError):
            conditional_mean(V2, 0.0, 1.5, 0.5)


class SimulationTests(SimpleTestCase):
    def test_path_starts_at_d0_and_stays_in_unit_interval(self):
        wild = JacobiDemandSpec("v", 5.0, TimeFunction.sinusoid(0.5, 0.45, 3.0), 6.0, 0.95)
        for seed in range(5):
            path = simulate_jacobi(wild, 0.0, 2.0, 0.01, seed)
            self.assertEqual(path.values[0], 0.95)
            self.assertTrue(np.all((path.values >= 0.0) & (path.values <= 1.0)))

    def test_clamp_hits_the_boundary_exactly(self):
        wild = JacobiDemandSpec("v", 5.0, TimeFunction.const(0.5), 8.0, 0.5)
        values = simulate_jacobi_ensemble(wild, 0.0, 1.0, 0.05, range(20))
        self.assertTrue(np.any(values == 0.0) or np.any(values == 1.0))

    def test_same_seed_same_path(self):
        first = simulate_jacobi(V2, 0.0, 2.5, 1e-3, 42)
        second = simulate_jacobi(V2, 0.0, 2.5, 1e-3, 42)
        np.testing.assert_array_equal(first.values, second.values)

    def test_ensemble_rows_equal_single_paths(self):
        seeds = [derive_seed(9, k) for k in range(4)]
        rows = simulate_jacobi_ensemble(V3, 0.0, 1.0, 0.01, seeds)
        for seed, row in zip(seeds, rows):
            np.testing.assert_array_equal(row, simulate_jacobi(V3, 0.0, 1.0, 0.01, seed).values)

    def test_value_at_update_time(self):
        path = simulate_jacobi(V2, 0.0, 2.5, 1e-3, 1)
        self.assertIsInstance(path, DemandPath)
        self.assertEqual(path.value_at(0.714), path.values[714])

    def test_noise_free_path_converges_at_first_order(self):
        quiet = V2.with_sigma(0.0)
        errors = []
        for dt in (0.01, 0.005):
            path = simulate_jacobi(quiet, 0.0, 2.0, dt, 0)
            exact = conditional_mean(quiet, 0.0, quiet.d0, path.times)
            errors.append(np.max(np.abs(path.values - exact)))
        ratio = errors[0] / errors[1]
        self.assertGreater(ratio, 1.7)
        self.assertLess(ratio, 2.3)

    def test_monte_carlo_mean_matches_conditional_mean(self):
        runs = 10_000
        seeds = [derive_seed(2024, k) for k in range(runs)]
        values = simulate_jacobi_ensemble(V2, 0.0, 1.0, 1e-3, seeds)
        times = sde_grid(0.0, 1.0, 1e-3)
        for index in (250, 500, 1000):
            sample = values[:, index]
            standard_error = sample.std(ddof=1) / np.sqrt(runs)
            expected = conditional_mean(V2, 0.0, V2.d0, times[index])
            self.assertLess(abs(sample.mean() - expected), 4 * standard_error)
