import math

import numpy as np
from django.test import SimpleTestCase, tag
from scipy.stats import kstest

from apps.core.exceptions import DomainError, SimulationError
from apps.extremal.domain import ExtremalProblem
from apps.extremal.services import calibrate_radius, rate_index_set, solve_extremal, test_weights
from apps.families.domain import CoefficientFamily, IndexWeights, MultiIndex, Variant
from apps.families.services import enumerate_below
from apps.testing.domain import VarianceMode
from apps.testing.services import h_lower_bound, h_shift, make_test_spec, rate_weights
from .domain import AlternativeSource, CoordinateCDF, DesignModel, SignRule, SourceKind
from .serializers import REPORT_COLUMNS, DesignModelSerializer, MonteCarloReportSerializer, load_design, report_row
from .services import (
    check_index_growth,
    check_seed,
    draw_alternative,
    draw_raw_design,
    gaussian_prior,
    in_alternative_set,
    least_favorable,
    monte_carlo,
    predicted_errors,
    predicted_rejection,
    prior_feasibility,
    replication_streams,
    sample_design,
    sample_response,
    smirnov_transform,
    total_error_forms,
    wilson_interval,
)

SOBOLEV_1D = CoefficientFamily(Variant.SOBOLEV_SUM, d=1, sigma=1)


def rate_spec(count, sigma=2, alpha=0.05, **kwargs):
    """Rate test on the first `count` frequencies of a one-dimensional Sobolev family"""
    family = CoefficientFamily(Variant.SOBOLEV_SUM, d=1, sigma=sigma)
    members = enumerate_below(family, (2 * math.pi * (count // 2 + 0.5)) ** sigma)
    return make_test_spec(rate_weights(members), alpha=alpha, **kwargs)


class DesignTest(SimpleTestCase):

    def test_uniform_range(self):
        rng = np.random.default_rng(1)
        points = sample_design(DesignModel.uniform(), 500, 3, rng)
        self.assertEqual(points.shape, (500, 3))
        self.assertTrue(np.all((points >= 0) & (points <= 1)))

    def test_product_design_matches_uniform(self):
        model = DesignModel.product(CoordinateCDF.named('expon'), CoordinateCDF.named('beta', a=2, b=3))
        product = sample_design(model, 50, 2, np.random.default_rng(4))
        uniform = sample_design(DesignModel.uniform(), 50, 2, np.random.default_rng(4))
        np.testing.assert_array_equal(product, uniform)

    def test_coordinate_count_must_match(self):
        model = DesignModel.product(CoordinateCDF.named('expon'), CoordinateCDF.named('norm'))
        with self.assertRaises(DomainError):
            sample_design(model, 10, 3, np.random.default_rng(0))

    def test_exponential_transform(self):
        model = DesignModel.product(CoordinateCDF.named('expon'))
        self.assertAlmostEqual(float(smirnov_transform(model, [math.log(2)])[0, 0]), 0.5, places=14)

    def test_table_transform(self):
        cdf = CoordinateCDF.table([0.0, 1.0, 3.0], [0.0, 0.5, 1.0])
        model = DesignModel.product(cdf)
        np.testing.assert_allclose(smirnov_transform(model, [-1.0, 0.5, 2.0, 5.0]).ravel(), [0, 0.25, 0.75, 1])

    def test_invalid_cdfs(self):
        with self.assertRaises(DomainError):
            CoordinateCDF.table([0.0, 1.0], [0.0, 0.7])
        with self.assertRaises(DomainError):
            CoordinateCDF.table([0.0, 1.0, 2.0], [0.0, 0.6, 0.5])
        with self.assertRaises(DomainError):
            CoordinateCDF.named('poisson', mu=2)
        with self.assertRaises(DomainError):
            CoordinateCDF.named('no-such-distribution')
        with self.assertRaises(DomainError):
            DesignModel.product()

    def test_transformed_raw_design_is_uniform(self):
        model = DesignModel.product(
            CoordinateCDF.named('expon', scale=2.0),
            CoordinateCDF.named('beta', a=2, b=3),
            CoordinateCDF.table([-1.0, 0.0, 2.0], [0.0, 0.3, 1.0]),
        )
        raw = draw_raw_design(model, 10 ** 5, 3, np.random.default_rng(2718))
        transformed = smirnov_transform(model, raw)
        for axis in range(3):
            with self.subTest(axis=axis):
                self.assertGreater(kstest(transformed[:, axis], 'uniform').pvalue, 1e-3)


class ResponseTest(SimpleTestCase):

    def test_null_source_gives_pure_noise(self):
        points = np.random.default_rng(0).uniform(size=(20, 1))
        sample = sample_response(draw_alternative(AlternativeSource.null(), None), points, 1.0,
                                 np.random.default_rng(9))
        np.testing.assert_array_equal(sample.responses, np.random.default_rng(9).standard_normal(20))

    def test_noiseless_constant(self):
        theta = IndexWeights.from_mapping({(): 2.0})
        sample = sample_response(theta, np.random.default_rng(0).uniform(size=(15, 2)), 0.0, None)
        np.testing.assert_array_equal(sample.responses, np.full(15, 2.0))

    def test_repeatable_with_a_fixed_seed(self):
        theta = IndexWeights.from_mapping({(1,): 0.3, (-2,): 0.1})
        samples = []
        for _ in range(2):
            design_rng, _, noise_rng = replication_streams(77, 3)
            points = sample_design(DesignModel.uniform(), 40, 1, design_rng)
            samples.append(sample_response(theta, points, 0.5, noise_rng))
        np.testing.assert_array_equal(samples[0].points, samples[1].points)
        np.testing.assert_array_equal(samples[0].responses, samples[1].responses)

    def test_negative_tau(self):
        with self.assertRaises(DomainError):
            sample_response(None, [[0.5]], -1.0, None)


class StreamTest(SimpleTestCase):

    def test_streams_depend_on_replication(self):
        first = [rng.random() for rng in replication_streams(5, 0)]
        again = [rng.random() for rng in replication_streams(5, 0)]
        other = [rng.random() for rng in replication_streams(5, 1)]
        self.assertEqual(first, again)
        self.assertNotEqual(first, other)
        self.assertEqual(len(set(first)), 3)

    def test_seed_range(self):
        self.assertEqual(check_seed(2 ** 64 - 1), 2 ** 64 - 1)
        for seed in (-1, 2 ** 64, 1.5):
            with self.assertRaises(DomainError):
                check_seed(seed)


class AlternativeTest(SimpleTestCase):

    def setUp(self):
        self.source = least_favorable(SOBOLEV_1D, 2000, 0.01)

    def test_deterministic_draw_sits_on_the_shell(self):
        theta = draw_alternative(self.source, np.random.default_rng(0))
        self.assertAlmostEqual(math.fsum(theta.values ** 2) / 0.01 ** 2, 1.0, places=10)
        coefficients = self.source.solution.coefficients
        self.assertAlmostEqual(math.fsum((coefficients * theta.values) ** 2), 1.0, places=8)
        self.assertTrue(np.all(theta.values >= 0))

    def test_rademacher_signs_keep_magnitudes(self):
        source = AlternativeSource(SourceKind.DETERMINISTIC, solution=self.source.solution,
                                   sign_rule=SignRule.RADEMACHER)
        positive = draw_alternative(self.source, None).values
        signed = draw_alternative(source, np.random.default_rng(3)).values
        np.testing.assert_array_equal(np.abs(signed), positive)
        self.assertTrue(np.any(signed < 0))
        self.assertEqual(source.mode, 'rademacher')

    def test_null_and_fixed(self):
        self.assertEqual(draw_alternative(AlternativeSource.null(), None).size, 0)
        theta = {(2,): 0.5}
        self.assertEqual(draw_alternative(AlternativeSource.fixed(theta), None).as_dict(), {MultiIndex.of(2): 0.5})

    def test_prior_variances(self):
        source = gaussian_prior(SOBOLEV_1D, 2000, 0.01, delta=0.05)
        draws = np.array([draw_alternative(source, np.random.default_rng(k)).values for k in range(4000)])
        expected = source.solution.v_squared / 2000
        np.testing.assert_allclose(draws.var(axis=0), expected, rtol=0.15)
        self.assertAlmostEqual(source.delta, 0.05, places=12)

    def test_prior_needs_symmetric_bounds(self):
        with self.assertRaises(DomainError):
            AlternativeSource(SourceKind.PRIOR, solution=self.source.solution)
        with self.assertRaises(DomainError):
            AlternativeSource(SourceKind.DETERMINISTIC)

    def test_alternative_set_membership(self):
        self.assertTrue(in_alternative_set([0.1, 0.1], [1.0, 2.0], r=0.1))
        self.assertFalse(in_alternative_set([0.05, 0.05], [1.0, 2.0], r=0.1))
        self.assertFalse(in_alternative_set([0.5, 0.5], [1.0, 2.0], r=0.1))

    def test_shift_dominates_the_rate_bound(self):
        n = 2000
        members = rate_index_set(SOBOLEV_1D, n)
        spec = make_test_spec(rate_weights(members), alpha=0.05)
        source = least_favorable(SOBOLEV_1D, n, 2.0 / members.cutoff, sign_rule=SignRule.RADEMACHER)
        bound = h_lower_bound(n, source.solution.problem.r, members.size, members.cutoff)
        self.assertGreater(bound, 0)
        shifts = [h_shift(draw_alternative(source, np.random.default_rng(k)), spec, n) for k in range(100)]
        self.assertGreaterEqual(min(shifts), bound * (1 - 1e-12))


class PredictionTest(SimpleTestCase):

    def test_predicted_errors(self):
        self.assertAlmostEqual(predicted_errors(0.05, 0.0).beta, 0.95, places=12)
        self.assertAlmostEqual(predicted_errors(0.3, 2.0).gamma, 0.31731, places=5)
        self.assertAlmostEqual(predicted_errors(0.05, 1.6448536269514722).beta, 0.5, places=12)
        with self.assertRaises(DomainError):
            predicted_errors(0.05, -1.0)

    def test_total_error_forms(self):
        forms = total_error_forms(2.0)
        self.assertAlmostEqual(forms.half_boundary, 0.31731, places=5)
        self.assertAlmostEqual(forms.full_boundary, 0.04550, places=5)

    def test_predicted_rejection(self):
        spec = rate_spec(50)
        self.assertAlmostEqual(predicted_rejection(spec, AlternativeSource.null(), 2000), 0.05, places=12)
        source = least_favorable(SOBOLEV_1D, 2000, 0.01)
        sharp = make_test_spec(test_weights(source.solution), alpha=0.05)
        expected = 1 - predicted_errors(0.05, source.solution.u).beta
        self.assertAlmostEqual(predicted_rejection(sharp, source, 2000), expected, places=8)

    def test_index_growth_guidance(self):
        self.assertTrue(check_index_growth(50, 2000))
        self.assertTrue(check_index_growth(200, 2000))
        with self.assertLogs('apps.sim.services', level='WARNING'):
            self.assertFalse(check_index_growth(200, 2000, weak_a2=True))


class WilsonIntervalTest(SimpleTestCase):

    def test_contains_the_rate(self):
        for successes in (0, 1, 37, 99, 100):
            lo, hi = wilson_interval(successes, 100)
            self.assertLessEqual(0.0, lo)
            self.assertLessEqual(lo, successes / 100)
            self.assertLessEqual(successes / 100, hi)
            self.assertLessEqual(hi, 1.0)

    def test_known_value(self):
        lo, hi = wilson_interval(50, 100)
        self.assertAlmostEqual(lo, 0.40383, places=5)
        self.assertAlmostEqual(hi, 0.59617, places=5)

    def test_coverage(self):
        rng = np.random.default_rng(1234)
        for p in (0.25, 0.5, 0.64):
            counts = rng.binomial(400, p, size=1000)
            covered = sum(lo <= p <= hi for lo, hi in (wilson_interval(int(k), 400) for k in counts))
            with self.subTest(p=p):
                self.assertGreaterEqual(covered / 1000, 0.93)

    def test_invalid_counts(self):
        with self.assertRaises(DomainError):
            wilson_interval(3, 0)
        with self.assertRaises(DomainError):
            wilson_interval(5, 4)


class MonteCarloTest(SimpleTestCase):

    def test_reproducible_report(self):
        spec = rate_spec(10)
        first = monte_carlo(spec, AlternativeSource.null(), DesignModel.uniform(), 200, 1.0, 1, seed=42)
        second = monte_carlo(spec, AlternativeSource.null(), DesignModel.uniform(), 200, 1.0, 1, seed=42)
        self.assertEqual(first.without_runtime(), second.without_runtime())
        self.assertEqual(first.replications, 1)

    def test_workers_do_not_change_the_report(self):
        source = least_favorable(SOBOLEV_1D, 300, 0.02, sign_rule=SignRule.RADEMACHER)
        spec = make_test_spec(test_weights(source.solution), alpha=0.05)
        serial = monte_carlo(spec, source, DesignModel.uniform(), 300, 1.0, 60, seed=7, workers=1)
        parallel = monte_carlo(spec, source, DesignModel.uniform(), 300, 1.0, 60, seed=7, workers=3)
        self.assertEqual(serial.without_runtime(), parallel.without_runtime())
        self.assertEqual(serial.u_n, source.solution.u)

    def test_failed_replication_is_reported(self):
        spec = rate_spec(4, variance_mode=VarianceMode.PLUGIN)
        with self.assertRaises(SimulationError) as raised:
            monte_carlo(spec, AlternativeSource.null(), DesignModel.uniform(), 20, 0.0, 5, seed=1)
        self.assertEqual(raised.exception.replication, 0)
        self.assertEqual(raised.exception.exit_code, 5)

    def test_invalid_arguments(self):
        spec = rate_spec(4)
        with self.assertRaises(DomainError):
            monte_carlo(spec, AlternativeSource.null(), DesignModel.uniform(), 20, 1.0, 0, seed=1)
        with self.assertRaises(DomainError):
            monte_carlo(spec, AlternativeSource.null(), DesignModel.uniform(), 20, 1.0, 5, seed=1, workers=0)

    def test_report_row(self):
        source = least_favorable(SOBOLEV_1D, 200, 0.02)
        spec = make_test_spec(test_weights(source.solution), alpha=0.05)
        report = monte_carlo(spec, source, DesignModel.uniform(), 200, 1.0, 10, seed=3)
        row = report_row(report)
        self.assertEqual(tuple(row), REPORT_COLUMNS)
        self.assertEqual(row['family'], 'sobolev-sum')
        self.assertEqual(row['mode'], 'deterministic')
        self.assertEqual(row['N'], spec.size)
        data = MonteCarloReportSerializer(report).data
        self.assertEqual(data['replications'], 10)
        self.assertEqual(data['family']['variant'], 'sobolev-sum')


class DesignSerializerTest(SimpleTestCase):

    def test_round_trip(self):
        model = DesignModel.product(CoordinateCDF.named('beta', a=2, b=3), CoordinateCDF.table([0, 1], [0, 1]))
        restored = load_design(DesignModelSerializer(model).data)
        self.assertEqual(restored.kind, model.kind)
        y = np.array([[0.3, 0.4]])
        np.testing.assert_array_equal(smirnov_transform(restored, y), smirnov_transform(model, y))

    def test_invalid_model(self):
        with self.assertRaises(DomainError):
            load_design({'kind': 'product-cdf', 'cdfs': [{'distribution': 'table', 'knots': [0, 1]}]})
        with self.assertRaises(DomainError):
            load_design({'kind': 'product-cdf'})


@tag('slow')
class CalibrationTest(SimpleTestCase):

    def test_null_rate(self):
        spec = rate_spec(50)
        self.assertEqual(spec.size, 50)
        report = monte_carlo(spec, AlternativeSource.null(), DesignModel.uniform(), 2000, 1.0, 10 ** 4, seed=20240101)
        band = 3 * math.sqrt(0.05 * 0.95 / 10 ** 4) + 0.01
        self.assertLessEqual(abs(report.empirical_rate - 0.05), band)

    def test_power_at_the_boundary(self):
        family = CoefficientFamily(Variant.SOBOLEV_EUCLID, d=3, sigma=0.8)
        n = 2000
        source = least_favorable(family, n, calibrate_radius(family, n, 2.0))
        self.assertAlmostEqual(source.solution.u, 2.0, places=6)
        spec = make_test_spec(test_weights(source.solution), alpha=0.05)
        report = monte_carlo(spec, source, DesignModel.uniform(), n, 1.0, 10 ** 4, seed=99)
        self.assertAlmostEqual(report.predicted, 0.63873, places=4)
        self.assertLessEqual(abs(report.empirical_rate - 0.63873), 0.05)

    def test_power_grows_with_the_radius(self):
        n = 500
        base = calibrate_radius(SOBOLEV_1D, n, 2.0)
        rates = []
        for scale in (0.7, 0.85, 1.0, 1.15):
            source = least_favorable(SOBOLEV_1D, n, base * scale)
            spec = make_test_spec(test_weights(source.solution), alpha=0.05)
            rates.append(monte_carlo(spec, source, DesignModel.uniform(), n, 1.0, 2000, seed=11).empirical_rate)
        for lower, higher in zip(rates, rates[1:]):
            slack = 2 * math.sqrt(lower * (1 - lower) / 2000)
            self.assertGreaterEqual(higher, lower - slack)

    def test_prior_feasibility(self):
        family = CoefficientFamily(Variant.SOBOLEV_SUM, d=2, sigma=1)
        source = gaussian_prior(family, 2000, 0.005, delta=0.05)
        self.assertGreater(source.solution.index_set.size, 1000)
        self.assertGreaterEqual(prior_feasibility(source, 10 ** 4, seed=5), 0.95)

    def test_extremal_problem_for_the_prior(self):
        family = CoefficientFamily(Variant.SOBOLEV_SUM, d=2, sigma=1)
        source = gaussian_prior(family, 2000, 0.005, delta=0.05)
        reference = solve_extremal(ExtremalProblem(family, 2000, 0.005, b=0.95, B=1.05))
        self.assertEqual(source.solution.u_squared, reference.u_squared)
