import math
import sys
import unittest
from pathlib import Path

import numpy as np
from parameterized import parameterized

REPO_ROOT = Path(__file__).resolve().parents[1]
if str(REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(REPO_ROOT))

from bbmshape.exceptions import NotConvexError, SpeedError
from bbmshape.models.field import make_trig_field
from bbmshape.solvers.spectral import malthusian_rate, principal_eigen
from bbmshape.solvers.speed import (
    GRID_BOUNDARY,
    default_zeta_grid,
    find_lambda_e,
    growth_exponent,
    legendre,
    offspring_exponent,
    propI_small_kappa_check,
    rate_at,
    rate_function,
    speed_profile,
    tune_window,
)

COSINE = make_trig_field(1, [((1,), 0.5)], 1.0)
LAMINATE = make_trig_field(2, [((1, 0), 0.5)], 1.0)
FLAT = make_trig_field(1, [], 1.0)


class TestFrontSpeed(unittest.TestCase):
    @parameterized.expand([(1, 0.5), (1, 1.0), (2, 2.0)])
    def test_homogeneous_speed(self, dim, beta):
        field = make_trig_field(dim, [], beta)
        e = np.zeros(dim)
        e[0] = 1.0
        solution = find_lambda_e(field, e)
        self.assertAlmostEqual(solution.lambda_e, math.sqrt(2.0 * beta), places=5)
        self.assertAlmostEqual(solution.c_star, math.sqrt(2.0 * beta), places=8)
        self.assertAlmostEqual(solution.gamma_e, 2.0 * beta, places=5)

    def test_tangency_at_minimizer(self):
        solution = find_lambda_e(COSINE, [1.0])
        h = 1e-4
        slope = (
            principal_eigen(COSINE, [1.0], solution.lambda_e + h).gamma
            - principal_eigen(COSINE, [1.0], solution.lambda_e - h).gamma
        ) / (2.0 * h)
        self.assertAlmostEqual(slope, solution.c_star, delta=1e-5)
        self.assertAlmostEqual(solution.gamma_e / solution.lambda_e, solution.c_star, places=10)

    def test_speed_above_mean_bound(self):
        self.assertGreaterEqual(find_lambda_e(COSINE, [1.0]).c_star, math.sqrt(2.0) - 1e-6)

    def test_cosine_reversal(self):
        self.assertAlmostEqual(find_lambda_e(COSINE, [1.0]).c_star, find_lambda_e(COSINE, [-1.0]).c_star, places=7)

    def test_laminate_across_stripes(self):
        c_star = find_lambda_e(LAMINATE, [0.0, 1.0]).c_star
        self.assertAlmostEqual(c_star, math.sqrt(2.0 * malthusian_rate(COSINE)), places=6)

    def test_laminate_along_stripes(self):
        self.assertAlmostEqual(
            find_lambda_e(LAMINATE, [1.0, 0.0]).c_star, find_lambda_e(COSINE, [1.0]).c_star, places=7
        )


class TestSpeedProfile(unittest.TestCase):
    def test_line_profile(self):
        profile = speed_profile(COSINE, 64)
        self.assertEqual(len(profile.entries), 2)
        self.assertEqual(profile.columns(), ["e_1", "lambda_e", "gamma_e", "c_star"])
        self.assertEqual(profile.entry_for([-1.0]).direction, (-1.0,))

    def test_planar_profile_rows(self):
        profile = speed_profile(LAMINATE, 16)
        rows = profile.to_rows()
        self.assertEqual(len(rows), 16)
        self.assertEqual(len(rows[0]), 5)
        self.assertGreaterEqual(profile.c_star.min(), math.sqrt(2.0) - 1e-6)
        entry = profile.entry_for([0.0, 1.0])
        np.testing.assert_allclose(entry.direction, [0.0, 1.0], atol=1e-12)


class TestRateFunction(unittest.TestCase):
    @parameterized.expand([(1.0,), (1.9 * math.sqrt(2.0),), (0.5 * math.sqrt(2.0),)])
    def test_homogeneous_rate_is_quadratic(self, zeta):
        expected = 0.5 * (zeta - math.sqrt(2.0)) ** 2
        self.assertAlmostEqual(rate_at(FLAT, [1.0], zeta), expected, places=6)

    def test_rate_vanishes_at_speed(self):
        solution = find_lambda_e(COSINE, [1.0])
        self.assertLessEqual(rate_at(COSINE, [1.0], solution.c_star, solution), 1e-8)

    def test_tabulated_rate(self):
        solution = find_lambda_e(COSINE, [1.0])
        grid = solution.c_star * np.linspace(0.6, 1.4, 17)
        rate = rate_function(COSINE, [1.0], grid, solution)
        self.assertAlmostEqual(rate.argmin, solution.c_star, places=10)
        self.assertTrue(np.all(rate.values >= 0.0))
        self.assertTrue(np.all(rate.maximizers[grid > solution.c_star] > 0.0))

    def test_rate_grid_must_increase(self):
        with self.assertRaises(SpeedError):
            rate_function(FLAT, [1.0], [1.0, 0.9, 1.2])

    def test_default_grid_contains_speed(self):
        grid = default_zeta_grid(1.7)
        self.assertTrue(np.any(np.isclose(grid, 1.7, rtol=0, atol=1e-12)))
        self.assertTrue(np.all(np.diff(grid) > 0))
        self.assertAlmostEqual(grid[0], 0.2 * 1.7)


class TestLegendre(unittest.TestCase):
    def test_quadratic_transform(self):
        eta = np.linspace(-3.0, 3.0, 61)
        self.assertAlmostEqual(legendre(eta, 0.5 * eta**2, 1.0), 0.5, places=10)

    def test_boundary_maximizer(self):
        eta = np.linspace(-3.0, 3.0, 61)
        self.assertIs(legendre(eta, 0.5 * eta**2, 5.0), GRID_BOUNDARY)

    def test_not_convex(self):
        eta = np.linspace(-1.0, 1.0, 11)
        with self.assertRaises(NotConvexError):
            legendre(eta, -(eta**2), 0.0)

    def test_needs_three_nodes(self):
        with self.assertRaises(SpeedError):
            legendre([0.0, 1.0], [0.0, 0.5], 0.2)


class TestExponents(unittest.TestCase):
    def test_small_kappa_homogeneous(self):
        beta = 0.5 * find_lambda_e(FLAT, [1.0]).gamma_e
        kappa = propI_small_kappa_check(FLAT, [1.0], beta)
        self.assertIsNotNone(kappa)
        c_star = math.sqrt(2.0)
        self.assertLess(0.5 * (kappa * c_star) ** 2, kappa * beta)

    def test_small_kappa_needs_positive_beta(self):
        with self.assertRaises(SpeedError):
            propI_small_kappa_check(FLAT, [1.0], 0.0)

    def test_growth_exponent_homogeneous(self):
        # alpha eps 2 - (alpha eps sqrt 2)^2 with alpha eps = 0.1
        self.assertAlmostEqual(growth_exponent(FLAT, [1.0], 0.2, 0.5), 0.2 - 0.02, places=6)

    def test_offspring_exponent_positive(self):
        self.assertGreater(offspring_exponent(COSINE, [1.0], 0.3), 0.0)

    def test_tuned_window_reaches_target(self):
        T0 = tune_window(FLAT, [1.0], 0.3)
        rate = offspring_exponent(FLAT, [1.0], 0.3)
        self.assertGreaterEqual(T0 * rate, math.log(2.0))
        self.assertLess((T0 - 0.5) * rate, math.log(2.0))

    def test_tune_window_rejects_target(self):
        with self.assertRaises(SpeedError):
            tune_window(FLAT, [1.0], 0.3, target=1.0)

    def test_tune_window_grid_too_short(self):
        with self.assertRaises(SpeedError):
            tune_window(FLAT, [1.0], 0.3, target=1e6, T0_grid=[0.5, 1.0])


if __name__ == "__main__":
    unittest.main()
