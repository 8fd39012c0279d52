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

from bbmshape.exceptions import BoundsError, SpectralError
from bbmshape.models.field import field_extrema, make_trig_field
from bbmshape.solvers.spectral import (
    branching_decay_rate,
    check_gamma_bounds,
    cumulant_limit,
    fd_principal_eigenvalue,
    gamma_curve,
    malthusian_rate,
    principal_eigen,
)

COSINE = make_trig_field(1, [((1,), 0.5)], 1.0)
LAMINATE = make_trig_field(2, [((1, 0), 0.5)], 1.0)


class TestHomogeneous(unittest.TestCase):
    @parameterized.expand([(1, 0.5, 0.0), (1, 1.0, 1.3), (2, 2.0, 0.7), (3, 1.0, 2.0)])
    def test_gamma_is_beta_plus_half_lambda_squared(self, dim, beta, lam):
        field = make_trig_field(dim, [], beta)
        e = np.zeros(dim)
        e[0] = 1.0
        result = principal_eigen(field, e, lam)
        self.assertAlmostEqual(result.gamma, beta + 0.5 * lam**2, places=10)
        np.testing.assert_allclose(result.psi, 1.0, atol=1e-12)

    def test_psi_at_is_constant(self):
        result = principal_eigen(make_trig_field(2, [], 1.0), [0.6, 0.8], 1.0)
        np.testing.assert_allclose(result.psi_at(np.array([[0.1, 0.2], [0.7, 0.3]])), 1.0, atol=1e-12)


class TestCosineEnvironment(unittest.TestCase):
    @parameterized.expand([(0.0,), (0.5,), (1.5,), (3.0,)])
    def test_gamma_within_bounds(self, lam):
        low, high = field_extrema(COSINE)
        gamma = principal_eigen(COSINE, [1.0], lam).gamma
        self.assertGreaterEqual(gamma, 1.0 + 0.5 * lam**2 - 1e-10)
        self.assertLessEqual(gamma, high + 0.5 * lam**2 + 1e-10)
        self.assertGreater(gamma, low + 0.5 * lam**2)

    def test_psi_positive_and_normalized(self):
        result = principal_eigen(COSINE, [1.0], 1.2)
        self.assertGreater(result.psi.min(), 0.0)
        self.assertAlmostEqual(float(result.psi.max()), 1.0, places=8)
        self.assertLess(result.residual, 1e-6)

    def test_psi_at_matches_grid(self):
        result = principal_eigen(COSINE, [1.0], 0.8)
        x = np.arange(result.grid_n) / result.grid_n
        np.testing.assert_allclose(result.psi_at(x), result.psi, atol=1e-10)

    def test_curve_is_convex(self):
        curve = gamma_curve(COSINE, [1.0], np.linspace(0.0, 4.0, 9))
        self.assertEqual(len(curve), 9)

    def test_curve_needs_increasing_grid(self):
        with self.assertRaises(SpectralError):
            gamma_curve(COSINE, [1.0], [1.0, 0.5, 2.0])

    @parameterized.expand([(0.4,), (1.0,), (2.5,)])
    def test_reversal_symmetry(self, lam):
        forward = principal_eigen(COSINE, [1.0], lam).gamma
        backward = principal_eigen(COSINE, [-1.0], lam).gamma
        self.assertAlmostEqual(forward, backward, places=9)

    @parameterized.expand([(0.0,), (1.0,), (2.0,)])
    def test_finite_difference_agreement(self, lam):
        spectral = principal_eigen(COSINE, [1.0], lam).gamma
        fd = fd_principal_eigenvalue(COSINE, [1.0], lam, 128, richardson=True)
        self.assertAlmostEqual(spectral, fd, delta=1e-5)

    def test_cumulant_vanishes_at_zero(self):
        self.assertEqual(cumulant_limit(COSINE, [1.0], 0.0, lambda_e=1.0), 0.0)

    def test_cumulant_is_gamma_difference(self):
        expected = principal_eigen(COSINE, [1.0], 1.3).gamma - principal_eigen(COSINE, [1.0], 1.0).gamma
        self.assertAlmostEqual(cumulant_limit(COSINE, [1.0], 0.3, lambda_e=1.0), expected, places=12)


class TestLaminate(unittest.TestCase):
    @parameterized.expand([(0.5,), (1.5,)])
    def test_along_stripes_matches_line(self, lam):
        planar = principal_eigen(LAMINATE, [1.0, 0.0], lam).gamma
        line = principal_eigen(COSINE, [1.0], lam).gamma
        self.assertAlmostEqual(planar, line, places=9)

    @parameterized.expand([(0.5,), (1.5,)])
    def test_across_stripes_is_shifted_parabola(self, lam):
        planar = principal_eigen(LAMINATE, [0.0, 1.0], lam).gamma
        self.assertAlmostEqual(planar, malthusian_rate(COSINE) + 0.5 * lam**2, places=9)

    def test_malthusian_rate_direction_free(self):
        self.assertAlmostEqual(
            principal_eigen(LAMINATE, [0.6, 0.8], 0.0).gamma, malthusian_rate(LAMINATE), places=10
        )

    def test_finite_difference_2d(self):
        e = [math.sqrt(0.5), math.sqrt(0.5)]
        spectral = principal_eigen(LAMINATE, e, 1.0).gamma
        fd = fd_principal_eigenvalue(LAMINATE, e, 1.0, 32, richardson=True)
        self.assertAlmostEqual(spectral, fd, delta=1e-4)


class TestBranchingDecay(unittest.TestCase):
    def test_homogeneous_rate_is_beta(self):
        self.assertAlmostEqual(branching_decay_rate(make_trig_field(1, [], 1.7)), 1.7, places=10)

    @parameterized.expand([(COSINE,), (LAMINATE,)])
    def test_between_min_and_mean(self, field):
        low, _ = field_extrema(field)
        theta = branching_decay_rate(field)
        self.assertGreaterEqual(theta, low - 1e-10)
        self.assertLessEqual(theta, field.mean + 1e-10)


class TestErrors(unittest.TestCase):
    def test_non_unit_direction(self):
        with self.assertRaises(ValueError):
            principal_eigen(LAMINATE, [1.0, 1.0], 0.5)

    def test_truncation_floor(self):
        with self.assertRaises(SpectralError):
            principal_eigen(COSINE, [1.0], 0.5, N=2)

    def test_finite_difference_limited_to_planar(self):
        field = make_trig_field(3, [], 1.0)
        with self.assertRaises(SpectralError):
            fd_principal_eigenvalue(field, [1.0, 0.0, 0.0], 0.5, 8)

    @parameterized.expand([("below", 0.9, 1.0), ("above", 2.6, 1.0), ("below_tilted", 1.4, 1.0)])
    def test_gamma_outside_bounds(self, _, gamma, lam):
        with self.assertRaises(BoundsError):
            check_gamma_bounds(gamma, lam, 1.0, 2.0)

    def test_gamma_on_bounds(self):
        check_gamma_bounds(1.5, 1.0, 1.0, 2.0)
        check_gamma_bounds(2.5 + 1e-7, 1.0, 1.0, 2.0)

    def test_solver_rejects_out_of_bounds_gamma(self):
        # bounds above the true range stand in for an under-resolved truncation
        with mock.patch("bbmshape.solvers.spectral._field_bounds", return_value=(5.0, 6.0)):
            with self.assertRaises(BoundsError):
                principal_eigen(COSINE, [1.0], 0.37)
        self.assertAlmostEqual(principal_eigen(COSINE, [1.0], 0.37).lam, 0.37)


if __name__ == "__main__":
    unittest.main()
