import math

import numpy as np
from django.test import SimpleTestCase, override_settings
from hypothesis import assume, given, settings
import hypothesis.strategies as st

from mom_regression.base import KNN, Kernel, Partition, WeightedNN, base_predict
from mom_regression.core import ConfigurationError, Dataset, InvalidArgumentError, ResourceLimitError, make_rng
from mom_regression.mom import (
    ROBUST_INFLATION, ModelClass, MoMConfig, adaptive_radius_knn, admissible_delta, bound_radius, ceil_log,
    mom_block_predictions, mom_predict, per_m_radius, select_base, select_h_star, select_k_star_bagged,
    select_k_star_knn, select_k_star_mnn, select_K_star, select_m, sup_error_partition, tuned_radius,
    uniform_partition_radius, validity_constant,
)
from mom_regression.weights import knn_weights

E = math.e


class ModelClassTests(SimpleTestCase):

    def test_rho_above_diameter_bound(self):
        with self.assertRaises(InvalidArgumentError):
            ModelClass(rho=2.0, sigma=1.0, d=1, diameter=1.0)

    def test_negative_sigma(self):
        with self.assertRaises(InvalidArgumentError):
            ModelClass(rho=1.0, sigma=-1.0, d=1)

    def test_alpha_required_for_mutual_neighbours(self):
        with self.assertRaises(InvalidArgumentError):
            validity_constant('mnn', ModelClass(rho=0.25, sigma=1.0, d=2))


class SelectMTests(SimpleTestCase):

    def test_examples(self):
        self.assertEqual(select_m(math.exp(-5)), 5)
        self.assertEqual(select_m(0.05), 3)
        self.assertEqual(select_m(0.9), 1)

    def test_out_of_range(self):
        for delta in (0, 1, -0.1, 1.5):
            with self.subTest(delta=delta), self.assertRaises(InvalidArgumentError):
                select_m(delta)

    @given(st.integers(1, 40))
    def test_exact_powers_of_e(self, m):
        self.assertEqual(select_m(math.exp(-m)), m)

    def test_just_below_a_power_of_e_rounds_up(self):
        self.assertEqual(select_m(math.exp(-3) * (1 - 1e-12)), 4)
        self.assertEqual(ceil_log(3 + 1e-12), 4)
        self.assertEqual(ceil_log(5.0), 5)


class ValidityConstantTests(SimpleTestCase):

    def test_knn(self):
        c = validity_constant('knn', ModelClass(rho=0.25, sigma=1.0, d=2))
        self.assertAlmostEqual(c, 0.25 / (32 * E ** 2), places=15)
        self.assertAlmostEqual(c, 1.057e-3, places=6)

    def test_kernel_boundary_of_the_minimum(self):
        model = ModelClass(rho=1.0, sigma=1 / (2 * E * math.sqrt(2)), d=1, diameter=1.0)
        self.assertAlmostEqual(validity_constant('kernel', model), 1.0, places=12)

    def test_partition(self):
        model = ModelClass(rho=1.0, sigma=1.0, d=1)
        self.assertAlmostEqual(validity_constant('partition', model), 1 / (16 * E ** 2), places=15)

    def test_weighted_has_no_constant(self):
        with self.assertRaises(InvalidArgumentError):
            validity_constant('weighted', ModelClass(rho=1.0, sigma=1.0, d=1))

    def test_admissible_interval(self):
        model = ModelClass(rho=0.25, sigma=1.0, d=2)
        c = validity_constant('knn', model)
        interval = admissible_delta('knn', model, 100_000)
        self.assertAlmostEqual(interval.lower, math.exp(-c * 100_000 + 1))
        self.assertTrue(interval.contains(math.exp(-3)))
        self.assertTrue(admissible_delta('knn', model, 1).empty)


class SelectorTests(SimpleTestCase):

    def test_knn(self):
        self.assertEqual(select_k_star_knn(ModelClass(rho=0.25, sigma=1.0, d=2), 100_000, 3), 5)

    def test_knn_headline_configuration(self):
        self.assertEqual(select_k_star_knn(ModelClass(rho=1.0, sigma=0.5, d=1), 4096, 3), 12)

    def test_knn_below_one(self):
        with self.assertRaises(ConfigurationError) as ctx:
            select_k_star_knn(ModelClass(rho=1.0, sigma=0.5, d=1), 10, 1)
        self.assertEqual(ctx.exception.constraint, '1 <= k*')

    def test_bagged(self):
        self.assertEqual(select_k_star_bagged(ModelClass(rho=1.0, sigma=1.0, d=2), 10_000, 2), 1087)

    def test_bagged_exceeds_block(self):
        with self.assertRaises(ConfigurationError) as ctx:
            select_k_star_bagged(ModelClass(rho=1.0, sigma=1.0, d=2), 10, 10)
        self.assertEqual(ctx.exception.constraint, 'k* <= N')

    def test_mnn(self):
        self.assertEqual(select_k_star_mnn(ModelClass(rho=0.25, sigma=1.0, d=2, alpha=1.0), 100_000, 3), 8)

    def test_mnn_small_alpha(self):
        with self.assertRaises(ConfigurationError):
            select_k_star_mnn(ModelClass(rho=0.25, sigma=1.0, d=2, alpha=1e-9), 100_000, 3)

    def test_bandwidth(self):
        h = select_h_star(ModelClass(rho=0.5, sigma=1.0, d=1), 1000, 2)
        self.assertAlmostEqual(h, (8 * E ** 2 * 2 / 500) ** (1 / 3), places=14)
        self.assertAlmostEqual(h, 0.618, delta=1e-3)

    def test_bandwidth_noiseless(self):
        with self.assertRaises(ConfigurationError):
            select_h_star(ModelClass(rho=0.5, sigma=0.0, d=1), 1000, 2)

    def test_bandwidth_above_diameter(self):
        with self.assertRaises(ConfigurationError) as ctx:
            select_h_star(ModelClass(rho=0.5, sigma=10.0, d=1), 100, 2)
        self.assertEqual(ctx.exception.constraint, 'h* <= D')

    def test_cells(self):
        self.assertEqual(select_K_star(ModelClass(rho=1.0, sigma=0.1, d=1), 10_000, 1), 20)
        with self.assertRaises(ConfigurationError):
            select_K_star(ModelClass(rho=1.0, sigma=1.0, d=1), 10, 1)

    @given(st.integers(1, 4), st.floats(1.0, 2.0), st.floats(0.5, 1.0), st.integers(10 ** 6, 10 ** 8),
           st.integers(1, 3))
    @settings(max_examples=60, deadline=None)
    def test_doubling_n_scales_knn_k_star(self, d, sigma, rho, n, m):
        model = ModelClass(rho=rho, sigma=sigma, d=d)
        try:
            k, k_doubled = select_k_star_knn(model, n, m), select_k_star_knn(model, 2 * n, m)
        except ConfigurationError:
            assume(False)
        factor = 2 ** (2 / (d + 2))
        # raw(2n) = factor * raw(n) and raw(n) lies in [k, k + 1).
        self.assertGreaterEqual(k_doubled, math.floor(factor * k * (1 - 1e-12)))
        self.assertLessEqual(k_doubled, factor * (k + 1) * (1 + 1e-12))

    @given(st.integers(1, 4), st.floats(0.01, 1.0), st.floats(1.0, 10.0), st.integers(10 ** 5, 10 ** 8))
    @settings(max_examples=60, deadline=None)
    def test_K_star_is_nonincreasing_in_sigma(self, d, sigma, growth, n):
        noisier = ModelClass(rho=1.0, sigma=sigma * growth, d=d)
        try:
            cells_noisier = select_K_star(noisier, n, 1)
        except ConfigurationError:
            assume(False)
        self.assertGreaterEqual(select_K_star(ModelClass(rho=1.0, sigma=sigma, d=d), n, 1), cells_noisier)

    def test_select_base_clamps_with_warning(self):
        model = ModelClass(rho=1.0, sigma=0.5, d=1)
        with self.assertLogs('mom_regression.mom', 'WARNING'):
            kind = select_base('knn', model, 10, 1, clamp=True)
        self.assertEqual(kind, KNN(1))

    def test_select_base_returns_tuned_kinds(self):
        model = ModelClass(rho=0.5, sigma=1.0, d=1)
        self.assertIsInstance(select_base('kernel', model, 1000, 2), Kernel)
        self.assertIsInstance(select_base('partition', ModelClass(rho=1.0, sigma=0.1, d=1), 10_000, 1), Partition)


class RadiusTests(SimpleTestCase):

    def test_knn_example(self):
        radius = bound_radius('knn', ModelClass(rho=0.25, sigma=1.0, d=2), 100_000, math.exp(-3))
        self.assertEqual(radius.m, 3)
        self.assertAlmostEqual(radius.radius, 35.0, delta=0.05)
        self.assertAlmostEqual(radius.constant_a, 32 * E ** 2 * math.sqrt(2))

    def test_headline_radius(self):
        radius = bound_radius('knn', ModelClass(rho=1.0, sigma=0.5, d=1), 4096, math.exp(-3))
        self.assertAlmostEqual(radius.radius, 18.99, delta=0.05)

    def test_robust_inflation(self):
        model = ModelClass(rho=0.25, sigma=1.0, d=2)
        plain = bound_radius('knn', model, 100_000, 0.01)
        robust = bound_radius('knn', model, 100_000, 0.01, robust=True)
        self.assertAlmostEqual(robust.radius / plain.radius, ROBUST_INFLATION)
        self.assertTrue(robust.robust)

    def test_inadmissible_delta(self):
        with self.assertRaises(ConfigurationError):
            bound_radius('knn', ModelClass(rho=1.0, sigma=0.5, d=1), 10, 0.1)

    def test_per_m_radius_increases_with_m(self):
        model = ModelClass(rho=1.0, sigma=0.5, d=1)
        radii = [per_m_radius('bagged', model, 4096, m) for m in range(1, 10)]
        self.assertEqual(radii, sorted(radii))

    def test_tuned_radius_knn(self):
        model = ModelClass(rho=1.0, sigma=0.5, d=1)
        expected = 2 * E * 0.5 * math.sqrt(2 / 12) + 16 * E ** 2 * (12 * 3 / 4096)
        self.assertAlmostEqual(tuned_radius(KNN(12), model, 4096, 3), expected)

    def test_tuned_radius_weighted(self):
        model = ModelClass(rho=1.0, sigma=0.5, d=1)
        self.assertGreater(tuned_radius(WeightedNN(knn_weights(3, 1365)), model, 4096, 3), 0)
        with self.assertRaises(InvalidArgumentError):
            tuned_radius(WeightedNN(knn_weights(3, 10)), model, 4096, 3)

    def test_uniform_partition_radius(self):
        model = ModelClass(rho=1.0, sigma=0.5, d=1)
        expected = E * math.sqrt(16 * 0.25 * 4 ** (1 + 2 / 3) * 3 / 4096) + 1 / 4
        self.assertAlmostEqual(uniform_partition_radius(model, 4096, 3, 4), expected)

    def test_adaptive_radius(self):
        model = ModelClass(rho=1.0, sigma=0.5, d=1)
        blocks = math.ceil(math.log(1 / ((1 - math.exp(-1)) * 0.05)))
        expected = 64 * E ** 2 * math.sqrt(2) * (0.25 * blocks / 4096) ** (1 / 3)
        self.assertAlmostEqual(adaptive_radius_knn(model, 4096, 0.05), expected)


class MomPredictTests(SimpleTestCase):

    def test_block_means_median(self):
        dataset = Dataset(np.linspace(0.1, 0.6, 6).reshape(-1, 1), [1, 2, 4, 5, 100, 101])
        config = MoMConfig(3, Partition(1))
        np.testing.assert_allclose(mom_block_predictions(dataset, [0.5], config), [1.5, 4.5, 100.5])
        self.assertEqual(mom_predict(dataset, [0.5], config), 4.5)

    def test_single_block_is_the_base_estimate(self):
        rng = make_rng(4)
        dataset = Dataset(rng.random((50, 2)), rng.normal(size=50))
        x = rng.random(2)
        self.assertEqual(mom_predict(dataset, x, MoMConfig(1, KNN(5)), seed=3),
                         base_predict(KNN(5), dataset, x))

    def test_coincident_points(self):
        y = np.array([3.0, -1.0, 8.0, 2.0, 5.0])
        dataset = Dataset(np.full((5, 1), 0.4), y)
        self.assertEqual(mom_predict(dataset, [0.4], MoMConfig(5, KNN(1))), 3.0)

    def test_invalid_config(self):
        dataset = Dataset(np.zeros((4, 1)), np.zeros(4))
        with self.assertRaises(InvalidArgumentError):
            mom_predict(dataset, [0.0], MoMConfig(5, KNN(1)))
        with self.assertRaises(InvalidArgumentError):
            mom_predict(dataset, [0.0], MoMConfig(2, KNN(3)))

    @given(st.integers(0, 2 ** 32), st.integers(1, 9))
    @settings(max_examples=30, deadline=None)
    def test_deterministic_given_seed(self, seed, m):
        rng = make_rng(seed)
        dataset = Dataset(rng.integers(0, 3, size=(45, 1)) / 2, rng.normal(size=45))
        config = MoMConfig(m, KNN(1))
        self.assertEqual(mom_predict(dataset, [0.5], config, seed), mom_predict(dataset, [0.5], config, seed))

    @given(st.integers(0, 2 ** 32))
    @settings(max_examples=30, deadline=None)
    def test_median_tolerates_minority_of_corrupted_blocks(self, seed):
        rng = make_rng(seed)
        X = rng.random((40, 1))
        y = rng.normal(size=40)
        corrupted = y.copy()
        corrupted[:10] = 1e9
        config = MoMConfig(5, KNN(2))
        estimate = mom_predict(Dataset(X, corrupted), [0.5], config)
        self.assertLess(abs(estimate), 1e6)

    @given(st.integers(0, 2 ** 32), st.integers(1, 3), st.integers(1, 7),
           st.sampled_from(['knn', 'partition', 'kernel']), st.floats(-100, 100))
    @settings(max_examples=60, deadline=None)
    def test_estimate_is_a_block_prediction_and_follows_shifts(self, seed, d, m, family, shift):
        rng = make_rng(seed)
        X = rng.random((8 * m, d))
        y = rng.normal(size=8 * m)
        x = rng.random(d)
        # Each base rule averages a nonempty set here.
        base = {'knn': KNN(3), 'partition': Partition(1), 'kernel': Kernel(math.sqrt(d))}[family]
        config = MoMConfig(m, base)
        estimate = mom_predict(Dataset(X, y), x, config, seed)
        self.assertIn(estimate, list(mom_block_predictions(Dataset(X, y), x, config, seed)))
        shifted = mom_predict(Dataset(X, y + shift), x, config, seed)
        self.assertAlmostEqual(shifted - estimate, shift, delta=1e-9)


class SupErrorTests(SimpleTestCase):

    def test_zero_truth_zero_responses(self):
        dataset = Dataset(make_rng(1).random((60, 2)), np.zeros(60))
        self.assertEqual(sup_error_partition(dataset, 3, 4, 0, lambda X: np.zeros(len(X))), 0.0)

    def test_single_cell(self):
        dataset = Dataset(np.linspace(0, 1, 6).reshape(-1, 1), [1, 2, 4, 5, 100, 101])
        error = sup_error_partition(dataset, 3, 1, 0, lambda X: np.full(len(X), 2.0))
        self.assertEqual(error, 2.5)

    @override_settings(MOM_MAX_PARTITION_CELLS=10)
    def test_cell_cap(self):
        dataset = Dataset(make_rng(1).random((60, 2)), np.zeros(60))
        with self.assertRaises(ResourceLimitError):
            sup_error_partition(dataset, 3, 4, 0, lambda X: np.zeros(len(X)))

    def test_matches_pointwise_predictions(self):
        rng = make_rng(8)
        dataset = Dataset(rng.random((90, 1)), rng.normal(size=90))
        grid = np.array([[0.05], [0.3], [0.55], [0.95]])
        truth = lambda X: X[:, 0]
        expected = max(abs(mom_predict(dataset, g, MoMConfig(3, Partition(3))) - g[0]) for g in grid)
        self.assertAlmostEqual(sup_error_partition(dataset, 3, 3, 0, truth, grid=grid), expected, places=12)
