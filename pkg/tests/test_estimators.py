import math
import sys
import unittest
from pathlib import Path

import numpy as np
from parameterized import parameterized

REPO_ROOT = Path(__file__).resolve().parents[1]
if str(REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(REPO_ROOT))

from bbmshape.exceptions import SimulationError
from bbmshape.models.field import make_trig_field
from bbmshape.simulation.estimators import (
    HalfspaceTable,
    branching_time_tail,
    caratheodory_hit,
    cutoff_check,
    ergodic_check,
    generation_process,
    growth_rate_check,
    halfspace_lower_stat,
    halfspace_upper_stat,
    inter_branch_ks,
    interpolation_check,
    kernel_condition_check,
    many_to_one_check,
    period_cell_positions,
    shape_error,
    verified_window,
)
from bbmshape.solvers.wulff import build_wulff_from_support
from bbmshape.utils import direction_grid

FLAT = make_trig_field(1, [], 1.0)
COSINE = make_trig_field(1, [((1,), 0.5)], 1.0)
FLAT_2D = make_trig_field(2, [], 1.0)
DISC = build_wulff_from_support(direction_grid(2, 64), np.full(64, math.sqrt(2.0)))


def _table(probabilities, t_list=(1.0, 2.0, 3.0, 4.0), event="upper", shares=None):
    t = np.asarray(t_list, dtype=float)
    p = np.asarray(probabilities, dtype=float)
    share = np.zeros_like(p) if shares is None else np.asarray(shares, dtype=float)
    return HalfspaceTable(event, t, p, np.zeros_like(p), share, 0.3, 1.0, -0.6, "conservative")


class TestManyToOne(unittest.TestCase):
    @parameterized.expand([("one", 0.0), ("endpoint", 0.5), ("path_max", 0.5)])
    def test_particle_sum_matches_path_mean(self, functional, level):
        check = many_to_one_check(COSINE, functional, 1.0, 2000, seed=21, level=level)
        self.assertTrue(check.passed(4.0), f"z={check.z:.2f}")
        self.assertEqual(check.columns()[0], "check")
        self.assertEqual(check.to_rows()[0][0], f"many_to_one:{functional}")

    def test_horizon_limit(self):
        with self.assertRaises(SimulationError):
            many_to_one_check(FLAT, "one", 3.5, 100, seed=0)


class TestHalfspace(unittest.TestCase):
    def test_table_slope(self):
        table = _table(np.exp(-np.array([1.0, 2.0, 3.0, 4.0])))
        self.assertAlmostEqual(table.slope, -1.0)
        self.assertTrue(table.strictly_decreasing)
        self.assertTrue(table.nonincreasing)
        self.assertFalse(table.is_upper_bound)

    def test_table_monotonicity(self):
        table = _table([0.5, 0.3, 0.3, 0.1], t_list=(4.0, 5.0, 6.0, 7.0))
        self.assertTrue(table.nonincreasing)
        self.assertFalse(table.strictly_decreasing)
        self.assertTrue(math.isnan(_table([0.5, 0.0, 0.0, 0.0]).slope))

    def test_thinned_lower_is_upper_bound(self):
        self.assertTrue(_table([0.5, 0.4, 0.3, 0.2], event="lower", shares=[0, 0, 0.1, 0.2]).is_upper_bound)

    def test_rows_carry_thresholds(self):
        rows = _table([0.5, 0.4, 0.3, 0.2]).to_rows()
        self.assertAlmostEqual(rows[1][3], 1.3 * 2.0)
        rows = _table([0.5, 0.4, 0.3, 0.2], event="lower").to_rows()
        self.assertAlmostEqual(rows[1][3], 0.7 * 2.0)

    def test_upper_event(self):
        table = halfspace_upper_stat(FLAT, [1.0], 0.3, [1.0, 2.0], 500, seed=22)
        self.assertEqual(table.event, "upper")
        self.assertTrue(np.all((table.probabilities >= 0.0) & (table.probabilities <= 1.0)))
        self.assertAlmostEqual(table.reference_exponent, -0.3 * 2.0, places=5)
        self.assertAlmostEqual(table.c_star, math.sqrt(2.0), places=6)

    def test_lower_event_rejects_thinning(self):
        table = halfspace_lower_stat(FLAT, [1.0], 0.3, [1.0, 2.0], 500, seed=23)
        self.assertEqual(table.policy, "reject")
        self.assertFalse(table.is_upper_bound)
        np.testing.assert_array_equal(table.thinned_share, 0.0)

    @parameterized.expand([(0.0, 500), (0.3, 100)])
    def test_argument_checks(self, epsilon, reps):
        with self.assertRaises(SimulationError):
            halfspace_upper_stat(FLAT, [1.0], epsilon, [1.0], reps, seed=0)


class TestBranchingTail(unittest.TestCase):
    def test_constant_rate(self):
        tail = branching_time_tail(FLAT, None, [0.5, 1.0, 1.5, 2.0], 10_000, seed=24)
        self.assertAlmostEqual(tail.decay_rate, 1.0, places=8)
        self.assertLess(tail.relative_error, 0.1)
        self.assertEqual(len(tail.to_rows()), 4)

    def test_needs_reps(self):
        with self.assertRaises(SimulationError):
            branching_time_tail(FLAT, None, [1.0, 2.0], 100, seed=0)

    def test_exponential_clock_ks(self):
        result = inter_branch_ks(make_trig_field(1, [], 2.0), 4000, seed=25)
        self.assertTrue(result.passed, f"sqrt(n) D={result.scaled_statistic:.3f}")

    def test_ks_needs_constant_field(self):
        with self.assertRaises(SimulationError):
            inter_branch_ks(COSINE, 100, seed=0)


class TestErgodic(unittest.TestCase):
    def test_constant_field_has_no_fluctuation(self):
        table = ergodic_check(make_trig_field(1, [], 0.8), [1.0, 2.0], 10_000, seed=26)
        self.assertTrue(math.isnan(table.slope))
        self.assertEqual(table.z_final, 0.0)
        self.assertTrue(table.passed)

    def test_cosine_variance_decays(self):
        table = ergodic_check(COSINE, [2.0, 4.0, 8.0], 10_000, seed=27)
        self.assertLess(table.slope, -0.8)
        self.assertGreater(table.slope, -1.3)
        self.assertTrue(table.passed)

    def test_times_must_increase(self):
        with self.assertRaises(SimulationError):
            ergodic_check(COSINE, [2.0, 1.0], 10_000, seed=0)


class TestGenerationProcess(unittest.TestCase):
    def test_summary(self):
        summary = generation_process(FLAT, [1.0], 0.3, 1.5, 2, 500, seed=28)
        self.assertAlmostEqual(summary.predicted_exponent, 0.3 * 2.0 - 0.5 * (0.3 * math.sqrt(2.0)) ** 2, places=5)
        self.assertEqual(len(summary.to_rows()[0]), len(summary.columns()))
        self.assertGreaterEqual(summary.survival, 0.0)

    def test_kernel_positions(self):
        np.testing.assert_allclose(period_cell_positions(2, 4), [[0, 0], [0.25, 0.25], [0.5, 0.5], [0.75, 0.75]])
        result = kernel_condition_check(FLAT, [1.0], 0.6, 2.5, 500, seed=29, n_positions=2)
        self.assertEqual(result.means.shape, (2,))
        self.assertTrue(result.passed)

    def test_verified_window(self):
        # expected members from x: exp(T0) P[B_T0 >= 0.4 sqrt(2) T0] first exceeds 2 at T0 = 2.5
        T0 = verified_window(FLAT, [1.0], 0.6, reps=2000, seed=30, n_positions=2)
        self.assertGreaterEqual(T0, 2.0)
        self.assertLessEqual(T0, 3.0)


class TestShape(unittest.TestCase):
    def test_shape_error_table(self):
        table = shape_error(FLAT_2D, DISC, [1.0, 2.0], 10, 20_000, seed=31, epsilon=0.5)
        self.assertEqual(table.errors.shape, (2, 10))
        self.assertTrue(np.all(table.errors >= 0.0))
        self.assertEqual(len(table.to_rows()), 2)

    def test_shape_error_arguments(self):
        with self.assertRaises(SimulationError):
            shape_error(FLAT_2D, DISC, [1.0], 10, 1000, seed=0)
        with self.assertRaises(SimulationError):
            shape_error(make_trig_field(3, [], 1.0), DISC, [1.0], 10, 20_000, seed=0)

    def test_ball_hit(self):
        result = caratheodory_hit(FLAT_2D, DISC, [0.0, 0.0], 1.0, 2.0, 100, seed=32)
        self.assertTrue(result.inside)
        self.assertIsNotNone(result.decomposition)
        self.assertGreater(result.fraction, 0.5)

    def test_cutoff(self):
        result = cutoff_check(FLAT, [1.0], 0.5, 2.0, 1, 200, seed=33)
        self.assertGreaterEqual(result.p_min_below, 0.0)
        self.assertLess(result.p_count_below, 0.5)
        with self.assertRaises(SimulationError):
            cutoff_check(FLAT, [1.0], 0.5, 2.0, 5000, 10, seed=0, cap=1000)

    def test_growth_rate(self):
        table = growth_rate_check(FLAT, [1.0, 2.0], 1000, seed=34)
        expected = np.exp(table.t_list)
        self.assertTrue(np.all(np.abs(table.means - expected) <= 4.0 * table.standard_errors))
        self.assertAlmostEqual(table.reference_rate, 1.0, places=8)

    def test_interpolation(self):
        result = interpolation_check(FLAT, 2.0, 50, seed=35)
        self.assertEqual(result.ratios.shape, (50,))
        self.assertTrue(np.all(result.ratios >= 0.0))


if __name__ == "__main__":
    unittest.main()
