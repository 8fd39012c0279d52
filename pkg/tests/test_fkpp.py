import math
import sys
import unittest
from pathlib import Path

import numpy as np
from parameterized import parameterized

REPO_ROOT = Path(__file__).resolve().parents[1]
if str(REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(REPO_ROOT))

from bbmshape.exceptions import CflViolationError, DomainTooSmallError, FkppError
from bbmshape.models.field import make_trig_field
from bbmshape.solvers.fkpp import (
    F_HALFSPACE,
    F_ONE,
    F_SIGMOID,
    F_ZERO,
    INIT_BUMP,
    INIT_HEAVISIDE,
    front_speed_estimate,
    initial_functional,
    mckean_check,
    solve_fkpp,
)

FLAT = make_trig_field(1, [], 1.0)
COSINE = make_trig_field(1, [((1,), 0.5)], 1.0)
SQRT2 = math.sqrt(2.0)
DX = 0.1
DT = 0.4 * DX * DX


class TestSolver(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.fkpp_run = solve_fkpp(FLAT, INIT_HEAVISIDE, SQRT2 * 40.0 + 12.0, DX, DT, 40.0, c_star=SQRT2)

    def test_frames_stay_in_unit_interval(self):
        self.assertEqual(self.fkpp_run.frames.shape, (41, self.fkpp_run.x.size))
        self.assertGreaterEqual(self.fkpp_run.frames.min(), 0.0)
        self.assertLessEqual(self.fkpp_run.frames.max(), 1.0)
        self.assertEqual(self.fkpp_run.init_id, INIT_HEAVISIDE)

    def test_front_stays_monotone(self):
        self.assertEqual(self.fkpp_run.monotone_violations, 0)
        self.assertTrue(np.all(np.diff(self.fkpp_run.level_positions) >= 0.0))

    def test_homogeneous_front_speed(self):
        # the 1/2-level lags c* t by a logarithmic correction
        speed = front_speed_estimate(self.fkpp_run, c_star=SQRT2)
        self.assertLess(speed.speed, SQRT2 + 0.01)
        self.assertLess(speed.relative_error, 0.05)
        self.assertGreater(speed.r_squared, 0.99)
        self.assertTrue(speed.tails_ok)
        self.assertEqual(len(speed.to_rows()[0]), len(speed.columns()))

    def test_level_rows(self):
        rows = self.fkpp_run.to_rows()
        self.assertEqual(len(rows), 41)
        self.assertEqual(rows[0][0], 0.0)
        self.assertAlmostEqual(rows[0][1], 0.0, delta=DX)

    def test_mirrored_front(self):
        L = SQRT2 * 20.0 + 12.0
        right = front_speed_estimate(solve_fkpp(FLAT, INIT_HEAVISIDE, L, DX, DT, 20.0))
        left_run = solve_fkpp(FLAT, INIT_HEAVISIDE, L, DX, DT, 20.0, front_direction=-1)
        self.assertLess(left_run.level_positions[-1], 0.0)
        self.assertAlmostEqual(front_speed_estimate(left_run).speed, right.speed, places=6)

    def test_periodic_front_moves(self):
        run = solve_fkpp(COSINE, INIT_HEAVISIDE, 40.0, DX, DT, 20.0)
        self.assertGreater(run.level_positions[-1], 0.5 * SQRT2 * 20.0)

    def test_bump_spreads(self):
        run = solve_fkpp(FLAT, INIT_BUMP, 30.0, DX, DT, 10.0)
        self.assertEqual(run.init_id, INIT_BUMP)
        self.assertGreater(run.q_at(0.0), 0.9)
        self.assertGreater(run.q_at(5.0), 0.5)
        self.assertLess(run.q_at(-25.0), 1e-3)

    def test_custom_initial_data(self):
        run = solve_fkpp(FLAT, INIT_HEAVISIDE, 20.0, DX, DT, 2.0, q0=lambda x: 0.5 * (x < 0.0))
        self.assertEqual(run.init_id, "custom")
        self.assertAlmostEqual(float(run.frames[0, 0]), 0.5)


class TestSolverErrors(unittest.TestCase):
    def test_cfl(self):
        with self.assertRaises(CflViolationError):
            solve_fkpp(FLAT, INIT_HEAVISIDE, 20.0, DX, 0.006, 1.0)

    def test_domain_too_small_upfront(self):
        with self.assertRaises(DomainTooSmallError):
            solve_fkpp(FLAT, INIT_HEAVISIDE, 20.0, DX, DT, 40.0, c_star=SQRT2)

    def test_front_reaches_boundary(self):
        with self.assertRaises(DomainTooSmallError):
            solve_fkpp(FLAT, INIT_HEAVISIDE, 15.0, DX, DT, 20.0)

    def test_planar_field(self):
        with self.assertRaises(FkppError):
            solve_fkpp(make_trig_field(2, [], 1.0), INIT_HEAVISIDE, 20.0, DX, DT, 1.0)

    @parameterized.expand([("direction", 0, None), ("range", 1, 1.5), ("init", 1, None)])
    def test_bad_arguments(self, case, direction, value):
        init_id = "ramp" if case == "init" else INIT_HEAVISIDE
        q0 = None if value is None else (lambda x: np.full_like(x, value))
        with self.assertRaises(FkppError):
            solve_fkpp(FLAT, init_id, 20.0, DX, DT, 1.0, front_direction=direction, q0=q0)

    def test_too_few_frames(self):
        run = solve_fkpp(FLAT, INIT_HEAVISIDE, 20.0, DX, DT, 5.0)
        with self.assertRaises(FkppError):
            front_speed_estimate(run)


class TestInitialFunctional(unittest.TestCase):
    def test_halfspace(self):
        np.testing.assert_array_equal(initial_functional(F_HALFSPACE, np.array([-1.0, 0.0, 1.0])), [1.0, 1.0, 0.0])

    def test_sigmoid(self):
        y = np.linspace(-3.0, 3.0, 13)
        values = initial_functional(F_SIGMOID, y)
        self.assertAlmostEqual(float(values[6]), 0.5)
        self.assertTrue(np.all(np.diff(values) < 0.0))
        self.assertTrue(np.all((values > 0.0) & (values < 1.0)))

    def test_constants(self):
        y = np.array([-2.0, 0.0, 2.0])
        np.testing.assert_array_equal(initial_functional(F_ONE, y), 1.0)
        np.testing.assert_array_equal(initial_functional(F_ZERO, y), 0.0)

    def test_unknown(self):
        with self.assertRaises(FkppError):
            initial_functional("step", np.zeros(2))


class TestMcKean(unittest.TestCase):
    def test_product_of_ones(self):
        table = mckean_check(FLAT, F_ONE, 1.0, 50, seed=61, x_probes=[0.0, 1.0])
        np.testing.assert_allclose(table.pde_q, 0.0, atol=1e-12)
        np.testing.assert_array_equal(table.mc_q, 0.0)
        np.testing.assert_array_equal(table.z, 0.0)
        self.assertTrue(table.passed())

    def test_product_of_zeros(self):
        table = mckean_check(FLAT, F_ZERO, 1.0, 50, seed=62, x_probes=[0.0])
        np.testing.assert_allclose(table.pde_q, 1.0, atol=1e-12)
        np.testing.assert_array_equal(table.mc_se, 0.0)
        self.assertTrue(table.passed())

    @parameterized.expand([(F_HALFSPACE,), (F_SIGMOID,)])
    def test_particles_match_pde(self, f_id):
        table = mckean_check(COSINE, f_id, 1.0, 2000, seed=63, x_probes=[-1.0, 0.0, 1.0])
        self.assertTrue(table.passed(4.0), f"z={table.z}")
        self.assertEqual(len(table.to_rows()), 3)

    def test_horizon_limit(self):
        with self.assertRaises(FkppError):
            mckean_check(FLAT, F_HALFSPACE, 3.5, 10, seed=0, x_probes=[0.0])


if __name__ == "__main__":
    unittest.main()
