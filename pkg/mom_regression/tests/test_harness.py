import math
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy import stats
from django.test import SimpleTestCase
from hypothesis import given, settings
import hypothesis.strategies as st

from mom_regression.core import Dataset, InvalidArgumentError, make_rng
from mom_regression.harness import (
    AdversarialRegression, ContaminationSpec, EstimatorSpec, NoiseSpec, QuerySpec, ScenarioSpec, TailEstimate,
    TailResult, bayes_error_floor, clopper_pearson, contaminate, contamination_experiment, contamination_scenario,
    estimate_tail, expected_nn_distance_check, g_squared_integral, generate_dataset, lower_bound_experiment,
    lower_bound_g, lower_bound_h, lower_bound_scenario, lower_bound_threshold, outlier_budget_ok, resolve_target,
    rho_unit_cube, run_trials, tail_report, warn_if_underpowered,
)
from mom_regression.mom import ModelClass, bound_radius
from mom_regression.scenarios import load_scenario, scenario_to_dict


def scenario(**changes):
    spec = ScenarioSpec(
        scenario_id='small',
        d=1,
        n=256,
        model=ModelClass(rho=1.0, sigma=0.5, d=1),
        estimators=(EstimatorSpec('knn', m=3, parameter=4),),
        noise=NoiseSpec('gaussian', 0.5),
        trials=12,
        seed=3,
    )
    return replace(spec, **changes)


class RhoUnitCubeTests(SimpleTestCase):

    def test_values(self):
        self.assertAlmostEqual(rho_unit_cube(1), 1.0)
        self.assertAlmostEqual(rho_unit_cube(2), math.pi / 8)

    def test_invalid_dimension(self):
        with self.assertRaises(InvalidArgumentError):
            rho_unit_cube(0)


class NoiseTests(SimpleTestCase):

    def test_validation(self):
        for kwargs in ({'family': 'cauchy'}, {'family': 'student_t'}, {'family': 'student_t', 'df': 2},
                       {'family': 'pareto', 'tail_index': 2}, {'sigma': -1.0}):
            with self.subTest(**kwargs), self.assertRaises(InvalidArgumentError):
                NoiseSpec(**kwargs)

    def test_variance_is_sigma_squared(self):
        for noise in (NoiseSpec('gaussian', 2.0), NoiseSpec('student_t', 2.0, df=5),
                      NoiseSpec('pareto', 2.0, tail_index=5)):
            with self.subTest(family=noise.family):
                draws = noise.draw(make_rng(1), 400_000)
                self.assertAlmostEqual(draws.var(), 4.0, delta=0.25)
                self.assertAlmostEqual(draws.mean(), 0.0, delta=0.05)

    def test_student_t_scaling_has_variance_sigma_squared(self):
        draws = NoiseSpec('student_t', 2.0, df=3).draw(make_rng(5), 1000)
        raw = make_rng(5).standard_t(3, 1000)
        np.testing.assert_allclose(draws, 2.0 * math.sqrt(1 / 3) * raw, rtol=1e-15)
        self.assertAlmostEqual(stats.t(3).var() * 4.0 / 3, 4.0, places=12)

    def test_noiseless(self):
        self.assertTrue(np.all(NoiseSpec('student_t', 0.0, df=3).draw(make_rng(0), 10) == 0))


class ScenarioSpecTests(SimpleTestCase):

    def test_estimator_validation(self):
        with self.assertRaises(InvalidArgumentError):
            EstimatorSpec('weighted', m=1)
        with self.assertRaises(InvalidArgumentError):
            EstimatorSpec('knn')
        with self.assertRaises(InvalidArgumentError):
            EstimatorSpec('knn', adaptive=True, parameter=3)
        with self.assertRaises(InvalidArgumentError):
            EstimatorSpec('knn', delta=1.0)

    def test_estimator_names(self):
        self.assertEqual(EstimatorSpec('knn', delta=0.1).name, 'mom-knn')
        self.assertEqual(EstimatorSpec('bagged', m=3, robust=True).name, 'mom-bagged-m3-robust')
        self.assertEqual(EstimatorSpec('knn', adaptive=True).name, 'adaptive-knn')
        self.assertEqual(EstimatorSpec('knn', m=2, label='custom').name, 'custom')

    def test_threshold_of_a_delta_estimator_is_the_bound_radius(self):
        spec = scenario(n=4096)
        estimator = EstimatorSpec('knn', delta=math.exp(-3))
        self.assertEqual(estimator.threshold(spec.model, spec.n), bound_radius('knn', spec.model, 4096, math.exp(-3)).radius)
        self.assertEqual(estimator.resolve(spec.model, spec.n).base.k, 12)

    def test_scenario_validation(self):
        with self.assertRaises(InvalidArgumentError):
            scenario(d=2)
        with self.assertRaises(InvalidArgumentError):
            scenario(estimators=())
        with self.assertRaises(InvalidArgumentError):
            scenario(target='unknown')
        with self.assertRaises(InvalidArgumentError):
            scenario(contamination=ContaminationSpec(n_outliers=300))

    def test_resolve_target(self):
        X = np.array([[0.2, 0.4]])
        self.assertAlmostEqual(resolve_target('mean_coordinate')(X)[0], 0.3)
        self.assertAlmostEqual(resolve_target('distance_to_center')(X)[0], math.hypot(0.3, 0.1))

    def test_query_policy(self):
        self.assertEqual(list(QuerySpec().draw(make_rng(0), 2, 1.0)), [0.5, 0.5])
        self.assertEqual(list(QuerySpec('fixed', (0.1,)).draw(make_rng(0), 1, 1.0)), [0.1])
        with self.assertRaises(InvalidArgumentError):
            QuerySpec('grid')


class DatasetGenerationTests(SimpleTestCase):

    def test_deterministic(self):
        first, again = generate_dataset(scenario(), 9), generate_dataset(scenario(), 9)
        np.testing.assert_array_equal(first.X, again.X)
        np.testing.assert_array_equal(first.y, again.y)

    def test_noiseless_responses_equal_the_target(self):
        dataset = generate_dataset(scenario(noise=NoiseSpec('gaussian', 0.0), target='sine'), 2)
        np.testing.assert_array_equal(dataset.y, np.sin(dataset.X[:, 0]))

    def test_support_side(self):
        dataset = generate_dataset(scenario(support_side=2.0, model=ModelClass(0.5, 0.5, 1, diameter=2.0)), 2)
        self.assertTrue(np.all((dataset.X >= 0) & (dataset.X <= 2.0)))


class ContaminationTests(SimpleTestCase):

    def setUp(self):
        rng = make_rng(0)
        self.dataset = Dataset(rng.random((50, 1)), rng.normal(size=50))

    def test_no_outliers_is_the_identity(self):
        dataset, indices = contaminate(self.dataset, ContaminationSpec(0), seed=1)
        self.assertIs(dataset, self.dataset)
        self.assertEqual(indices.size, 0)

    def test_block_placement_reaches_min_q_m_blocks(self):
        for q, expected in ((3, [0, 10, 20]), (7, [0, 1, 10, 11, 20, 30, 40])):
            with self.subTest(q=q):
                _, indices = contaminate(self.dataset, ContaminationSpec(q), seed=1, m=5)
                self.assertEqual(list(indices), expected)
                self.assertEqual(len(set(indices // 10)), min(q, 5))

    def test_other_samples_are_untouched(self):
        dirty, indices = contaminate(self.dataset, ContaminationSpec(4, location=(0.5,)), seed=1, m=4, sigma=2.0)
        keep = np.setdiff1d(np.arange(50), indices)
        np.testing.assert_array_equal(dirty.X[keep], self.dataset.X[keep])
        np.testing.assert_array_equal(dirty.y[keep], self.dataset.y[keep])
        self.assertTrue(np.all(dirty.y[indices] == 2e6))
        self.assertTrue(np.all(dirty.X[indices] == 0.5))

    def test_uniform_placement(self):
        _, indices = contaminate(self.dataset, ContaminationSpec(5, placement='uniform', magnitude=9.0), seed=4)
        self.assertEqual(len(set(indices)), 5)

    def test_too_many_outliers(self):
        with self.assertRaises(InvalidArgumentError):
            contaminate(self.dataset, ContaminationSpec(51), seed=1)

    def test_budget(self):
        self.assertTrue(outlier_budget_ok(4, 1))
        self.assertFalse(outlier_budget_ok(3, 1))

    def test_contamination_scenario(self):
        spec = contamination_scenario(scenario(n=1024), 1, math.exp(-4))
        self.assertEqual([e.name for e in spec.estimators], ['mom-knn-robust', 'pooled-knn'])
        self.assertEqual(spec.contamination.blocks, 4)
        self.assertEqual(spec.contamination.location, (0.5,))
        self.assertEqual(spec.query.point, (0.5,))

    def test_median_survives_outliers_that_ruin_the_pooled_estimate(self):
        robust, pooled = contamination_experiment(scenario(n=1024, trials=20), 1, math.exp(-4), timing=False)
        self.assertEqual(robust.tail.exceedances, 0)
        self.assertEqual(pooled.tail.exceedances, 20)
        self.assertGreater(robust.threshold, pooled.threshold)


class ClopperPearsonTests(SimpleTestCase):

    def test_closed_forms(self):
        lower, upper = clopper_pearson(0, 100, 0.95)
        self.assertEqual(lower, 0.0)
        self.assertAlmostEqual(upper, 1 - 0.025 ** (1 / 100), places=12)
        lower, upper = clopper_pearson(100, 100, 0.95)
        self.assertAlmostEqual(lower, 0.025 ** (1 / 100), places=12)
        self.assertEqual(upper, 1.0)

    def test_interval_contains_the_point_estimate(self):
        lower, upper = clopper_pearson(13, 200)
        self.assertLess(lower, 13 / 200)
        self.assertGreater(upper, 13 / 200)

    def test_invalid(self):
        for successes, trials in ((1, 0), (-1, 5), (6, 5)):
            with self.subTest(successes=successes, trials=trials), self.assertRaises(InvalidArgumentError):
                clopper_pearson(successes, trials)
        with self.assertRaises(InvalidArgumentError):
            clopper_pearson(1, 5, level=1.0)

    def test_coverage_on_bernoulli_streams(self):
        rng = make_rng(17)
        counts = (rng.random((2000, 20)) < 0.1).sum(axis=1)
        covered = [lower <= 0.1 <= upper for lower, upper in (clopper_pearson(int(k), 20, 0.95) for k in counts)]
        self.assertGreaterEqual(np.mean(covered), 0.95)
        exact = sum(stats.binom.pmf(k, 20, 0.1) for k in range(21)
                    if clopper_pearson(k, 20, 0.95)[0] <= 0.1 <= clopper_pearson(k, 20, 0.95)[1])
        self.assertGreaterEqual(exact, 0.95)

    def test_tail_estimate_counts_ties_as_exceedances(self):
        self.assertEqual(TailEstimate.from_errors([0.0, 0.5, 1.0], 0.0).point, 1.0)
        self.assertEqual(TailEstimate.from_errors([0.1, 0.2, 0.3], 0.2).exceedances, 2)

    def test_underpowered_warning(self):
        with self.assertLogs('mom_regression.harness', 'WARNING'):
            self.assertTrue(warn_if_underpowered(100, 0.05, 'label'))
        self.assertFalse(warn_if_underpowered(1_000_000, 0.5, 'label'))
        self.assertFalse(warn_if_underpowered(10, None, 'label'))

    def test_certified(self):
        tail = TailEstimate.from_counts(0, 1000, 0.95)
        result = TailResult('s', 'mom-knn', 10, 1, 0.01, 1.0, tail)
        self.assertTrue(result.certified)
        self.assertFalse(replace(result, delta=0.001).certified)
        self.assertFalse(replace(result, delta=None).certified)
        self.assertEqual(result.as_row()['exceedances'], 0)


class TrialTests(SimpleTestCase):

    def test_worker_count_does_not_change_the_errors(self):
        spec = scenario(estimators=(EstimatorSpec('knn', m=3, parameter=4), EstimatorSpec('kernel', m=2, parameter=0.2)))
        np.testing.assert_array_equal(run_trials(spec, jobs=1), run_trials(spec, jobs=2))

    def test_shape_and_overrides(self):
        errors = run_trials(scenario(), trials=5, seed=11)
        self.assertEqual(errors.shape, (5, 1))
        self.assertFalse(np.array_equal(errors, run_trials(scenario(), trials=5, seed=12)))

    def test_invalid_configuration_fails_before_running(self):
        with self.assertRaises(InvalidArgumentError):
            run_trials(scenario(estimators=(EstimatorSpec('knn', m=3, parameter=200),)))
        with self.assertRaises(InvalidArgumentError):
            run_trials(scenario(), jobs=0)

    def test_noiseless_constant_target_never_exceeds(self):
        spec = scenario(noise=NoiseSpec('gaussian', 0.0), target='zero')
        tail = estimate_tail(spec, threshold=0.1)
        self.assertEqual((tail.exceedances, tail.trials), (0, 12))

    def test_tail_report(self):
        spec = scenario(n=4096, trials=6, estimators=(EstimatorSpec('knn', delta=math.exp(-3)),))
        with self.assertLogs('mom_regression.harness', 'WARNING'):
            [result] = tail_report(spec, timing=False)
        self.assertEqual(result.estimator, 'mom-knn')
        self.assertEqual(result.wall_time_ms, 0)
        self.assertAlmostEqual(result.threshold, 18.99, delta=0.05)
        self.assertEqual(result.tail.exceedances, 0)

    def test_adaptive_estimator(self):
        estimator = EstimatorSpec('knn', adaptive=True, delta=0.1)
        errors = run_trials(scenario(estimators=(estimator,)), trials=4)
        self.assertTrue(np.all(np.isfinite(errors)))


class NearestNeighbourDistanceTests(SimpleTestCase):

    def test_bound_holds(self):
        check = expected_nn_distance_check(1, 10, 1, 2000, seed=5)
        self.assertAlmostEqual(check.bound, 2 / 11)
        self.assertAlmostEqual(check.mean, 0.5 / 11, delta=0.01)
        self.assertTrue(check.holds())

    def test_invalid(self):
        with self.assertRaises(InvalidArgumentError):
            expected_nn_distance_check(1, 10, 11, 100, seed=0)
        with self.assertRaises(InvalidArgumentError):
            expected_nn_distance_check(1, 10, 1, 1, seed=0)


class LowerBoundTests(SimpleTestCase):

    def test_g(self):
        np.testing.assert_allclose(lower_bound_g([[0.0], [0.25], [0.5], [0.7]]), [0.5, 0.25, 0.0, 0.0])
        self.assertAlmostEqual(float(lower_bound_g([0.1, -0.3])), 0.2)

    @given(st.lists(st.floats(-1, 1), min_size=3, max_size=3), st.lists(st.floats(-1, 1), min_size=3, max_size=3))
    def test_g_is_one_lipschitz(self, x, y):
        x, y = np.array(x), np.array(y)
        self.assertLessEqual(abs(float(lower_bound_g(x) - lower_bound_g(y))), np.linalg.norm(x - y) + 1e-12)

    def test_g_squared_integral(self):
        for d in range(1, 6):
            with self.subTest(d=d):
                self.assertAlmostEqual(g_squared_integral(d), 1 / (2 * (d + 1) * (d + 2)), places=12)

    def test_adversarial_regression(self):
        f = AdversarialRegression([1, -1], 0.5, 1)
        np.testing.assert_allclose(f([[0.25], [0.75], [0.5], [1.2]]), [0.25, -0.25, 0.0, 0.0])
        np.testing.assert_allclose(f.with_sign(1, 1)([[0.75]]), [0.25])
        with self.assertRaises(InvalidArgumentError):
            AdversarialRegression([1], 0.5, 1)
        with self.assertRaises(InvalidArgumentError):
            AdversarialRegression([1, 0], 0.5, 1)

    def test_instance_constants(self):
        delta = 2.0 ** -6
        self.assertAlmostEqual(lower_bound_h(1.0, 1, 64, delta), (math.pi * 6 * math.log(4) / 64) ** (1 / 3))
        self.assertAlmostEqual(lower_bound_h(1.0, 1, 64, delta), 0.742, delta=1e-3)
        self.assertAlmostEqual(lower_bound_threshold(1.0, 1, 64, delta), 0.0697, delta=1e-4)

    def test_boundary_delta(self):
        with self.assertLogs('mom_regression.harness', 'WARNING'):
            self.assertEqual(lower_bound_h(1.0, 1, 64, 2.0 ** -4), 0.0)
        with self.assertRaises(InvalidArgumentError):
            lower_bound_h(1.0, 1, 64, 0.1)

    def test_bayes_floor_dominates_delta(self):
        for d, delta in ((1, 2.0 ** -6), (1, 1e-6), (2, 1e-4), (3, 2.0 ** -6)):
            with self.subTest(d=d, delta=delta):
                self.assertGreaterEqual(bayes_error_floor(1.0, d, 64, delta), delta)

    def test_scenario(self):
        spec, h = lower_bound_scenario(1, 1.0, 64, 2.0 ** -6, EstimatorSpec('knn', m=1, parameter=1), 10, 0)
        self.assertEqual(spec.target.cells, 2)
        self.assertAlmostEqual(spec.support_side, 2 * h)
        self.assertEqual(spec.query.policy, 'random')

    def test_degenerate_scenario_uses_the_zero_target(self):
        with self.assertLogs('mom_regression.harness', 'WARNING'):
            spec, h = lower_bound_scenario(1, 1.0, 64, 2.0 ** -4, EstimatorSpec('knn', m=1, parameter=1), 10, 0)
        self.assertEqual((h, spec.target), (0.0, 'zero'))

    def test_experiment(self):
        with self.assertLogs('mom_regression', 'WARNING'):
            report = lower_bound_experiment(1, 1.0, 64, 2.0 ** -6, trials=40, seed=1, pilot_trials=10, timing=False)
        self.assertEqual(report.cells, 2)
        self.assertEqual(len(report.signs), 2)
        self.assertEqual(report.result.delta, 2.0 ** -6)
        self.assertEqual(report.tail.trials, 40)
        self.assertGreaterEqual(report.bayes_floor, report.delta)


class ScenarioFileTests(SimpleTestCase):

    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.addCleanup(self.directory.cleanup)

    def _write(self, text):
        path = Path(self.directory.name) / 'scenario.toml'
        path.write_text(text)
        return path

    def test_headline_file(self):
        spec = load_scenario(self._write(
            'scenario_id = "headline"\nd = 1\nn = 4096\ntrials = 10\nseed = 7\n'
            '[model]\nsigma = 0.5\n'
            '[estimator]\nfamily = "knn"\nlog_delta = -3\n'
        ))
        self.assertAlmostEqual(spec.model.rho, 1.0)
        self.assertEqual(spec.noise.sigma, 0.5)
        self.assertAlmostEqual(spec.estimator.delta, math.exp(-3))
        self.assertEqual(spec.estimator.block_count(), 3)

    def test_several_estimators_and_aliases(self):
        spec = load_scenario(self._write(
            'd = 2\nn = 1000\n[model]\nrho = 0.25\nsigma = 1.0\n'
            '[[estimator]]\nfamily = "knn"\nm = 3\nk = 5\n'
            '[[estimator]]\nfamily = "partition"\nm = 1\nK = 4\n'
            '[contamination]\nn_outliers = 2\n'
        ))
        self.assertEqual([e.parameter for e in spec.estimators], [5, 4])
        self.assertEqual(spec.contamination.n_outliers, 2)
        self.assertEqual(scenario_to_dict(spec)['estimators'][1]['family'], 'partition')

    def test_errors(self):
        cases = (
            'd = 1\nn = 10\ncolour = 1\n[model]\nsigma = 1\n[estimator]\nm = 1\n',
            'n = 10\n[model]\nsigma = 1\n[estimator]\nm = 1\n',
            'd = 1\nn = 10\n[model]\nsigma = 1\n[estimator]\nm = 1\nk = 1\nh = 0.1\n',
            'd = 1\nn = 10\n[model]\nsigma = 1\n[estimator]\nm = 1\ndelta = 0.1\nlog_delta = -2\n',
            'd = 1\nn = \n',
        )
        for text in cases:
            with self.subTest(text=text), self.assertRaises(InvalidArgumentError):
                load_scenario(self._write(text))
        with self.assertRaises(InvalidArgumentError):
            load_scenario(Path(self.directory.name) / 'missing.toml')
