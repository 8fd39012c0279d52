import math
import sys
import unittest
from pathlib import Path
from unittest import mock

import numpy as np
from parameterized import parameterized

REPO_ROOT = Path(__file__).resolve().parents[1]
if str(REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(REPO_ROOT))

from bbmshape.exceptions import SimulationError, TooFewHitsError
from bbmshape.models.field import make_trig_field
from bbmshape.simulation.brownian import feynman_kac_mean
from bbmshape.simulation.tilted import (
    LdpTable,
    change_of_measure_check,
    cumulant_from_ensemble,
    drift_field,
    empirical_cumulant,
    ldp_tail_check,
    lln_check,
    simulate_tilted,
)
from bbmshape.solvers.spectral import principal_eigen

FLAT = make_trig_field(1, [], 1.0)
COSINE = make_trig_field(1, [((1,), 0.5)], 1.0)
SQRT2 = math.sqrt(2.0)


class TestDrift(unittest.TestCase):
    def test_constant_psi_gives_constant_drift(self):
        drift = drift_field(principal_eigen(FLAT, [1.0], 1.2))
        self.assertIsNone(drift.spline_coefficients)
        self.assertAlmostEqual(drift.bound, 1.2)
        np.testing.assert_allclose(drift(np.array([0.1, 0.7])), [[1.2], [1.2]])

    def test_spline_matches_log_gradient(self):
        eigen = principal_eigen(COSINE, [1.0], 1.0)
        drift = drift_field(eigen)
        x = np.arange(eigen.grid_n) / eigen.grid_n
        np.testing.assert_allclose(drift(x)[:, 0], eigen.psi_log_grad[:, 0] + 1.0, atol=1e-6)
        self.assertGreater(drift.bound, 1.0)

    def test_drift_is_periodic(self):
        drift = drift_field(principal_eigen(COSINE, [-1.0], 0.8))
        x = np.linspace(0.0, 0.95, 17)
        np.testing.assert_allclose(drift(x + 3.0), drift(x), atol=1e-12)


class TestTiltedPaths(unittest.TestCase):
    def test_homogeneous_paths_drift_at_lambda(self):
        ensemble = simulate_tilted(FLAT, [1.0], SQRT2, [0.0], 4.0, 0.005, 2000, seed=41, record_times=[1.0, 4.0])
        self.assertEqual(ensemble.positions.shape, (2, 2000, 1))
        y_hat = ensemble.y_hat()
        self.assertLess(abs(y_hat.mean() - SQRT2), 4.0 * 0.5 / math.sqrt(2000))
        self.assertEqual(ensemble.jumps, 0)
        self.assertEqual(len(ensemble.paths()), 2000)

    def test_law_of_large_numbers(self):
        ensemble = simulate_tilted(FLAT, [1.0], SQRT2, [0.0], 20.0, 0.005, 2000, seed=42, record_times=[5.0, 10.0, 20.0])
        result = lln_check(ensemble, SQRT2)
        self.assertTrue(result.passed, f"z={result.z_final:.2f}, slope={result.variance_slope:.3f}")
        self.assertEqual(len(result.to_rows()), 3)

    @parameterized.expand([(0.01, None), (0.005, [0.0]), (0.005, [2.0])])
    def test_argument_checks(self, dt, record_times):
        with self.assertRaises(SimulationError):
            simulate_tilted(FLAT, [1.0], 1.0, [0.0], 1.0, dt, 10, seed=0, record_times=record_times)


class TestChangeOfMeasure(unittest.TestCase):
    @parameterized.expand([("one", 0.0), ("endpoint", 1.0)])
    def test_weighted_tilted_paths(self, functional, level):
        check = change_of_measure_check(COSINE, [1.0], 1.2, functional, 1.0, 4000, seed=43, level=level)
        self.assertTrue(check.passed(4.0), f"z={check.z:.2f}")

    def test_plain_paths_share_the_step(self):
        with mock.patch("bbmshape.simulation.tilted.feynman_kac_mean", wraps=feynman_kac_mean) as plain:
            check = change_of_measure_check(COSINE, [1.0], 1.2, "path_max", 1.0, 2000, seed=46, level=1.0, dt=0.002)
        self.assertEqual(plain.call_args.args[6], 0.002)
        self.assertTrue(check.passed(4.0), f"z={check.z:.2f}")

    def test_horizon_limit(self):
        with self.assertRaises(SimulationError):
            change_of_measure_check(FLAT, [1.0], 1.0, "one", 6.0, 100, seed=0)


class TestCumulant(unittest.TestCase):
    def test_homogeneous_cumulant(self):
        # Y_t ~ N(lambda t, t): (1/t) log E exp(eta Y_t) = lambda eta + eta^2 / 2
        estimate = empirical_cumulant(FLAT, [1.0], 0.3, 20.0, 10_000, seed=44)
        self.assertAlmostEqual(estimate.reference, SQRT2 * 0.3 + 0.045, places=5)
        self.assertLess(abs(estimate.z), 4.0)
        self.assertFalse(estimate.heavy_tail)

    def test_shared_ensemble(self):
        ensemble = simulate_tilted(FLAT, [1.0], SQRT2, [0.0], 2.0, 0.005, 500, seed=45)
        estimate = cumulant_from_ensemble(ensemble, 0.0, 0.0)
        self.assertAlmostEqual(estimate.value, 0.0, places=12)
        self.assertEqual(estimate.t, 2.0)

    @parameterized.expand([(1.5, 20.0, 10_000), (0.3, 5.0, 10_000), (0.3, 20.0, 100)])
    def test_argument_checks(self, eta, t, reps):
        with self.assertRaises(SimulationError):
            empirical_cumulant(FLAT, [1.0], eta, t, reps, seed=0)


class TestLdpTable(unittest.TestCase):
    def _table(self, reference, contains=False):
        t = np.array([1.0, 2.0, 4.0])
        p = np.exp(-0.5 * t)
        return LdpTable((2.0, 3.0), t, p, np.full(3, 1000), reference, contains)

    def test_exponents(self):
        table = self._table(0.5)
        np.testing.assert_allclose(table.exponents, 0.5)
        self.assertTrue(math.isnan(table.incremental_exponents[0]))
        np.testing.assert_allclose(table.incremental_exponents[1:], 0.5)
        self.assertAlmostEqual(table.final_exponent, 0.5)
        self.assertTrue(table.passed)

    def test_relative_tolerance(self):
        self.assertFalse(self._table(1.0).passed)

    def test_absolute_tolerance_when_speed_inside(self):
        self.assertFalse(self._table(0.0, contains=True).passed)

    def test_untestable_times_skipped(self):
        table = LdpTable((2.0, 3.0), np.array([1.0, 2.0]), np.array([0.1, 1e-6]), np.array([100, 0]), 0.5, False)
        self.assertEqual(table.testable.tolist(), [True, False])
        self.assertAlmostEqual(table.final_exponent, -math.log(0.1))


class TestLdpTail(unittest.TestCase):
    def test_homogeneous_tail(self):
        lo = 1.5 * SQRT2
        table = ldp_tail_check(FLAT, [1.0], (lo, math.inf), [1.0, 2.0], 100_000, seed=46)
        self.assertAlmostEqual(table.reference, 0.5 * (lo - SQRT2) ** 2, places=6)
        self.assertTrue(table.testable.all())
        self.assertTrue(np.all(np.diff(table.probabilities) < 0.0))

    def test_interval_too_close(self):
        with self.assertRaises(SimulationError):
            ldp_tail_check(FLAT, [1.0], (1.1 * SQRT2, math.inf), [1.0], 100_000, seed=0)

    def test_needs_reps(self):
        with self.assertRaises(SimulationError):
            ldp_tail_check(FLAT, [1.0], (3.0, math.inf), [1.0], 1000, seed=0)

    def test_untestable_interval(self):
        with self.assertRaises(TooFewHitsError):
            ldp_tail_check(FLAT, [1.0], (5.0 * SQRT2, 6.0 * SQRT2), [1.0], 100_000, seed=47)


if __name__ == "__main__":
    unittest.main()
