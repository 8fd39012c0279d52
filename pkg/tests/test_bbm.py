import math
import sys
import unittest
from pathlib import Path

import numpy as np
from parameterized import parameterized
from scipy import stats

REPO_ROOT = Path(__file__).resolve().parents[1]
if str(REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(REPO_ROOT))

from bbmshape.exceptions import CapThinnedError, SimulationError
from bbmshape.models.field import make_trig_field
from bbmshape.simulation.bbm import (
    count_reducer,
    generation_counts,
    projection_reducer,
    simulate,
    simulate_ensemble,
)
from bbmshape.simulation.brownian import (
    FunctionalKind,
    PathFunctional,
    feynman_kac_mean,
    first_branch_times,
    simulate_paths,
    time_averages,
)

FLAT = make_trig_field(1, [], 1.0)
COSINE = make_trig_field(1, [((1,), 0.5)], 1.0)


class TestEnsemble(unittest.TestCase):
    def test_mean_count_is_exponential(self):
        (snapshot,) = simulate_ensemble(FLAT, [0.0], 1.0, 0.01, 1000, seed=1, reps=2000)
        counts = snapshot.counts
        se = counts.std(ddof=1) / math.sqrt(counts.size)
        self.assertLess(abs(counts.mean() - math.e), 4.0 * se)
        self.assertFalse(snapshot.thinned.any())

    def test_same_seed_same_particles(self):
        a = simulate_ensemble(COSINE, [0.3], 1.0, 0.01, 1000, seed=4, reps=300)[0]
        b = simulate_ensemble(COSINE, [0.3], 1.0, 0.01, 1000, seed=4, reps=300)[0]
        np.testing.assert_array_equal(a.positions, b.positions)
        np.testing.assert_array_equal(a.owner, b.owner)

    def test_worker_count_does_not_matter(self):
        serial = simulate_ensemble(COSINE, [0.0], 0.5, 0.01, 1000, seed=8, reps=600, threads=1)[0]
        pooled = simulate_ensemble(COSINE, [0.0], 0.5, 0.01, 1000, seed=8, reps=600, threads=2)[0]
        np.testing.assert_array_equal(serial.positions, pooled.positions)

    def test_snapshot_times(self):
        snapshots = simulate_ensemble(FLAT, [0.0], 1.0, 0.01, 1000, seed=2, snapshot_times=[0.5, 0.0, 1.0], reps=50)
        self.assertEqual([s.time for s in snapshots], [0.0, 0.5, 1.0])
        np.testing.assert_array_equal(snapshots[0].counts, np.ones(50))

    def test_reducers(self):
        counts, projections = (
            simulate_ensemble(COSINE, [0.0], 1.0, 0.01, 1000, seed=3, reps=100, reducer=reducer)[0]
            for reducer in (count_reducer, projection_reducer([1.0]))
        )
        self.assertEqual(counts.shape, (100, 2))
        self.assertEqual(projections.shape, (100, 4))
        self.assertTrue(np.all(projections[:, 0] >= projections[:, 1]))
        np.testing.assert_array_equal(counts[:, 0], projections[:, 2])

    def test_planar_origins(self):
        field = make_trig_field(2, [((1, 0), 0.5)], 1.0)
        origins = np.array([[0.0, 0.0], [0.5, 0.5], [0.25, 0.0]])
        (snapshot,) = simulate_ensemble(field, origins, 0.2, 0.01, 1000, seed=5)
        self.assertEqual(snapshot.reps, 3)
        replica = snapshot.replica(1)
        np.testing.assert_array_equal(replica.origin, [0.5, 0.5])
        self.assertEqual(len(replica.particles()), replica.count)
        self.assertTrue(all(p.gen_id == 0 and p.ancestor_tag is None for p in replica.particles()))

    def test_thinning(self):
        (snapshot,) = simulate_ensemble(FLAT, [0.0], 10.0, 0.01, 1000, seed=6, reps=20)
        self.assertTrue(snapshot.thinned.any())
        self.assertTrue(np.all(snapshot.counts <= 1000))

    def test_strict_thinning_raises(self):
        with self.assertRaises(CapThinnedError):
            simulate_ensemble(FLAT, [0.0], 10.0, 0.01, 1000, seed=6, reps=20, strict=True)

    @parameterized.expand([(0.02, 1000, 1.0, None), (0.01, 10, 1.0, None), (0.01, 1000, 1.0, [2.0])])
    def test_argument_checks(self, dt, cap, t_end, times):
        with self.assertRaises(SimulationError):
            simulate_ensemble(FLAT, [0.0], t_end, dt, cap, seed=0, snapshot_times=times, reps=2)

    def test_origin_dimension(self):
        with self.assertRaises(SimulationError):
            simulate_ensemble(FLAT, np.zeros((2, 2)), 1.0, 0.01, 1000, seed=0)

    def test_single_run(self):
        snapshots = simulate(COSINE, 0.0, 1.0, 0.01, 1000, seed=9, snapshot_times=[0.5, 1.0])
        self.assertEqual(len(snapshots), 2)
        self.assertEqual(snapshots[-1].positions.shape, (snapshots[-1].count, 1))


class TestLineage(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.snapshots = simulate(FLAT, 0.0, 2.5, 0.01, 1000, seed=14, snapshot_times=[0.5, 1.0, 1.5, 2.5], lineage_T0=1.0)

    def test_generation_index_counts_windows(self):
        for snapshot, gen_id in zip(self.snapshots, (0, 1, 1, 2), strict=True):
            self.assertTrue(all(p.gen_id == gen_id for p in snapshot.particles()))

    def test_first_window_descends_from_root(self):
        self.assertEqual({p.ancestor_tag for p in self.snapshots[0].particles()}, {0})

    def test_window_start_tags_every_particle(self):
        tags = sorted(p.ancestor_tag for p in self.snapshots[1].particles())
        self.assertEqual(tags, list(range(self.snapshots[1].count)))

    def test_every_ancestor_leaves_descendants(self):
        tags = {p.ancestor_tag for p in self.snapshots[2].particles()}
        self.assertEqual(tags, set(range(self.snapshots[1].count)))

    def test_ensemble_tags_are_per_replica(self):
        (snapshot,) = simulate_ensemble(FLAT, [0.0], 1.5, 0.01, 1000, seed=15, reps=30, lineage_T0=1.0)
        for r in range(snapshot.reps):
            replica = snapshot.replica(r)
            self.assertLess(int(replica.ancestor_tags.max()), replica.count)
            np.testing.assert_array_equal(replica.gen_ids, 1)

    def test_window_must_be_positive(self):
        with self.assertRaises(SimulationError):
            simulate_ensemble(FLAT, [0.0], 1.0, 0.01, 1000, seed=0, reps=2, lineage_T0=0.0)


class TestGenerations(unittest.TestCase):
    def test_first_generation_mean(self):
        T0, epsilon, c_star = 1.5, 0.3, math.sqrt(2.0)
        result = generation_counts(FLAT, [1.0], epsilon, T0, c_star, 2, np.zeros((2000, 1)), 0.01, 10_000, seed=12)
        threshold = (1.0 - epsilon) * c_star * T0
        expected = math.exp(T0) * stats.norm.sf(threshold / math.sqrt(T0))
        self.assertAlmostEqual(result.threshold, threshold)
        self.assertEqual(result.counts.shape, (2000, 2))
        self.assertLess(abs(result.mean_offspring - expected), 4.0 * result.offspring_se + 0.01)
        self.assertLessEqual(result.survival_fraction, float(np.mean(result.counts[:, 0] > 0)))

    def test_generation_limit(self):
        with self.assertRaises(SimulationError):
            generation_counts(FLAT, [1.0], 0.3, 1.0, 1.0, 0, np.zeros((2, 1)), 0.01, 1000, seed=0)


class TestPaths(unittest.TestCase):
    def test_constant_field_integral(self):
        paths = simulate_paths(make_trig_field(2, [], 1.5), [0.0, 0.0], [1.0, 2.0], 100, seed=1)
        np.testing.assert_allclose(paths.integrals, [[1.5] * 100, [3.0] * 100], rtol=1e-12)
        self.assertEqual(paths.positions.shape, (2, 100, 2))
        self.assertIsNone(paths.run_max)

    def test_feynman_kac_constant(self):
        functional = PathFunctional.parse("one", 1)
        estimate = feynman_kac_mean(FLAT, [0.0], 1.0, functional, 50, seed=2)
        self.assertAlmostEqual(estimate.mean, math.e, places=10)
        self.assertAlmostEqual(estimate.se, 0.0, places=12)

    def test_endpoint_functional(self):
        functional = PathFunctional.parse("endpoint", 1, [1.0], 0.0)
        estimate = feynman_kac_mean(FLAT, [0.0], 1.0, functional, 4000, seed=3)
        self.assertLess(abs(estimate.mean - 0.5 * math.e), 4.0 * estimate.se)

    def test_path_max_functional(self):
        functional = PathFunctional.parse("path_max", 1, [1.0], 1.0)
        estimate = feynman_kac_mean(FLAT, [0.0], 1.0, functional, 4000, seed=4)
        probability = estimate.mean / math.e
        # the discrete maximum undershoots the reflection-principle value 0.3173
        self.assertGreater(probability, 0.25)
        self.assertLess(probability, 0.33)

    def test_drifted_sampler_is_unbiased(self):
        functional = PathFunctional.parse("endpoint", 1, [1.0], 1.0)
        plain = feynman_kac_mean(COSINE, [0.0], 1.0, functional, 4000, seed=5)
        drifted = feynman_kac_mean(COSINE, [0.0], 1.0, functional, 4000, seed=6, drift=[1.0])
        self.assertLess(abs(plain.z_against(drifted)), 4.0)

    def test_unknown_functional(self):
        with self.assertRaises(SimulationError):
            PathFunctional.parse("area", 1)

    def test_path_max_needs_maximum(self):
        functional = PathFunctional(FunctionalKind.PATH_MAX, (1.0,), 0.0)
        with self.assertRaises(SimulationError):
            functional(np.zeros(3))

    @parameterized.expand([(0.02, 10, [1.0]), (0.01, 1, [1.0]), (0.01, 10, [-1.0])])
    def test_path_argument_checks(self, dt, reps, times):
        with self.assertRaises(SimulationError):
            simulate_paths(FLAT, [0.0], times, reps, seed=0, dt=dt)


class TestBranchTimes(unittest.TestCase):
    def test_exponential_clock(self):
        tau = first_branch_times(make_trig_field(1, [], 2.0), [0.0], 20.0, 4000, seed=7)
        self.assertTrue(np.all(np.isfinite(tau)))
        se = 0.5 / math.sqrt(tau.size)
        self.assertLess(abs(tau.mean() - 0.5), 4.0 * se)

    def test_censored_at_horizon(self):
        tau = first_branch_times(FLAT, [0.0], 0.1, 2000, seed=8)
        self.assertTrue(np.any(np.isinf(tau)))
        self.assertTrue(np.all(tau[np.isfinite(tau)] <= 0.1 + 1e-12))


class TestTimeAverages(unittest.TestCase):
    def test_constant_field(self):
        averages = time_averages(make_trig_field(1, [], 0.7), [1.0, 2.0], 20, seed=1)
        np.testing.assert_allclose(averages, 0.7, rtol=1e-12)

    def test_stationary_start_mean(self):
        averages = time_averages(COSINE, [2.0], 2000, seed=2)[0]
        se = averages.std(ddof=1) / math.sqrt(averages.size)
        self.assertLess(abs(averages.mean() - 1.0), 4.0 * se)

    def test_positive_times(self):
        with self.assertRaises(SimulationError):
            time_averages(FLAT, [0.0, 1.0], 10, seed=0)


if __name__ == "__main__":
    unittest.main()
