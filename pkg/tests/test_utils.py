import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np
from parameterized import parameterized

REPO_ROOT = Path(__file__).resolve().parents[1]
if str(REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(REPO_ROOT))

from bbmshape.utils import (
    direction_angles,
    direction_grid,
    ensure_dir,
    loglog_slope,
    parabola_vertex,
    second_differences,
    stable_hash,
    unit_vector,
)
from bbmshape.utils.parallel import block_rng, replica_blocks, run_blocks


def _draw(task):
    seed, block = task
    return block_rng(seed, 5, block).random(3)


class TestDirections(unittest.TestCase):
    @parameterized.expand([(2, 8), (2, 64), (3, 50)])
    def test_grid_is_unit(self, dim, n):
        grid = direction_grid(dim, n)
        self.assertEqual(grid.shape, (n, dim))
        np.testing.assert_allclose(np.linalg.norm(grid, axis=1), 1.0, atol=1e-12)

    def test_line_grid_is_both_signs(self):
        np.testing.assert_array_equal(direction_grid(1, 64), [[1.0], [-1.0]])

    def test_planar_angles(self):
        grid = direction_grid(2, 4)
        np.testing.assert_allclose(direction_angles(grid), [0.0, np.pi / 2, np.pi, 3 * np.pi / 2], atol=1e-12)

    def test_unit_vector_rejects(self):
        with self.assertRaises(ValueError):
            unit_vector([1.0, 1.0])
        with self.assertRaises(ValueError):
            unit_vector([1.0, 0.0], dim=3)
        np.testing.assert_array_equal(unit_vector(1.0, 1), [1.0])

    def test_too_few_directions(self):
        with self.assertRaises(ValueError):
            direction_grid(2, 1)


class TestNumerics(unittest.TestCase):
    def test_parabola_vertex(self):
        x = np.array([0.0, 1.0, 3.0])
        y = (x - 1.2) ** 2 + 0.5
        xv, yv = parabola_vertex(x, y)
        self.assertAlmostEqual(xv, 1.2)
        self.assertAlmostEqual(yv, 0.5)

    def test_parabola_vertex_collinear(self):
        self.assertIsNone(parabola_vertex([0.0, 1.0, 2.0], [0.0, 1.0, 2.0]))

    def test_second_differences_of_quadratic(self):
        x = np.array([0.0, 0.5, 1.5, 2.0, 4.0])
        np.testing.assert_allclose(second_differences(x, 3.0 * x**2), 6.0)

    def test_loglog_slope(self):
        t = np.array([5.0, 10.0, 20.0, 40.0])
        self.assertAlmostEqual(loglog_slope(t, 2.0 / t), -1.0)

    def test_stable_hash_ignores_key_order(self):
        self.assertEqual(stable_hash({"a": 1, "b": [1, 2]}), stable_hash({"b": [1, 2], "a": 1}))
        self.assertNotEqual(stable_hash({"a": 1}), stable_hash({"a": 2}))

    def test_ensure_dir(self):
        with tempfile.TemporaryDirectory() as tmp:
            target = ensure_dir(Path(tmp) / "a" / "b")
            self.assertTrue(target.is_dir())


class TestParallel(unittest.TestCase):
    def test_replica_blocks_cover_reps(self):
        blocks = replica_blocks(1000, 256)
        self.assertEqual([b for b, _ in blocks], [0, 1, 2, 3])
        self.assertEqual(sum(size for _, size in blocks), 1000)
        self.assertEqual(blocks[-1][1], 1000 - 3 * 256)

    def test_streams_are_keyed(self):
        a = block_rng(1, 2, 3).random(4)
        np.testing.assert_array_equal(a, block_rng(1, 2, 3).random(4))
        self.assertFalse(np.array_equal(a, block_rng(1, 2, 4).random(4)))
        self.assertFalse(np.array_equal(a, block_rng(1, 3, 3).random(4)))

    def test_results_independent_of_workers(self):
        tasks = [(9, b) for b in range(4)]
        serial = run_blocks(_draw, tasks, threads=1)
        pooled = run_blocks(_draw, tasks, threads=2)
        for s, p in zip(serial, pooled, strict=True):
            np.testing.assert_array_equal(s, p)


if __name__ == "__main__":
    unittest.main()
