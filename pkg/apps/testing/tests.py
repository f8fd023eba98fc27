import math

import numpy as np
from django.test import SimpleTestCase, tag

from apps.basis.services import evaluate
from apps.core.exceptions import DegenerateSampleError, DomainError
from apps.families.domain import CoefficientFamily, IndexWeights, Variant
from apps.families.services import enumerate_below
from .domain import Criterion, Sample, TestSpec, VarianceMode
from .serializers import TestSpecSerializer
from .services import (
    decide,
    estimate_variance,
    h_lower_bound,
    h_shift,
    make_test_spec,
    rate_weights,
    run_test,
    threshold_np,
    threshold_total,
    u_statistic,
    u_statistic_naive,
)


def constant_spec(**kwargs):
    weights = IndexWeights(np.zeros((1, 1), dtype=np.int64), [math.sqrt(2)])
    return TestSpec(weights=weights, threshold=1.0, **kwargs)


def random_spec(rng, d, size, basis='fourier'):
    indices = rng.integers(-4, 5, size=(size, d))
    raw = rng.uniform(0.1, 1.0, size=size)
    values = raw / math.sqrt(0.5 * np.sum(raw ** 2))
    return TestSpec(weights=IndexWeights(indices, values), threshold=0.0, basis=basis)


def fourier_members(count):
    """The first `count` one-dimensional frequencies +-1, +-2, ..."""
    family = CoefficientFamily(Variant.SOBOLEV_SUM, d=1, sigma=1)
    return enumerate_below(family, 2 * math.pi * (count // 2 + 0.5))


class RateWeightsTest(SimpleTestCase):

    def test_weights_are_equal(self):
        members = fourier_members(50)
        self.assertEqual(members.size, 50)
        np.testing.assert_allclose(rate_weights(members).values, 0.2, rtol=1e-15)
        np.testing.assert_allclose(rate_weights(fourier_members(2)).values, 1.0, rtol=1e-15)

    def test_normalization(self):
        weights = rate_weights(fourier_members(30)).values
        self.assertAlmostEqual(0.5 * math.fsum(weights ** 2), 1.0, places=14)

    def test_empty_set(self):
        with self.assertRaises(DomainError):
            rate_weights(np.zeros((0, 1), dtype=np.int64))


class TestSpecTest(SimpleTestCase):

    def test_normalization_is_enforced(self):
        with self.assertRaises(DomainError):
            TestSpec(weights=IndexWeights([[1]], [1.0]), threshold=0.0)

    def test_known_variance_must_be_positive(self):
        with self.assertRaises(DomainError):
            constant_spec(tau2=0.0)

    def test_plugin_does_not_need_tau2(self):
        spec = constant_spec(variance_mode=VarianceMode.PLUGIN, tau2=None)
        self.assertEqual(spec.variance_mode, VarianceMode.PLUGIN)

    def test_make_test_spec_thresholds(self):
        weights = rate_weights(fourier_members(10))
        self.assertAlmostEqual(make_test_spec(weights, alpha=0.05).threshold, 1.6448536270, places=8)
        self.assertEqual(make_test_spec(weights, criterion=Criterion.TOTAL_ERROR, u=2.0).threshold, 1.0)
        with self.assertRaises(DomainError):
            make_test_spec(weights, criterion=Criterion.TOTAL_ERROR)

    def test_serializer_round_trip(self):
        spec = make_test_spec(rate_weights(fourier_members(4)), alpha=0.1)
        data = TestSpecSerializer(spec).data
        serializer = TestSpecSerializer(data=data)
        self.assertTrue(serializer.is_valid(), serializer.errors)
        restored = serializer.save()
        self.assertEqual(restored.threshold, spec.threshold)
        self.assertEqual(restored.weights.as_dict(), spec.weights.as_dict())


class UStatisticTest(SimpleTestCase):

    def test_two_point_example(self):
        sample = Sample(points=[[0.2], [0.7]], responses=[1.0, 1.0])
        spec = constant_spec()
        self.assertAlmostEqual(u_statistic(sample, spec), math.sqrt(2) / 2, places=14)
        self.assertAlmostEqual(u_statistic_naive(sample, spec), math.sqrt(2) / 2, places=14)

    def test_single_observation(self):
        sample = Sample(points=[[0.4]], responses=[3.0])
        self.assertEqual(u_statistic(sample, constant_spec()), 0.0)
        self.assertEqual(u_statistic_naive(sample, constant_spec()), 0.0)

    def test_empty_sample(self):
        sample = Sample(points=np.zeros((0, 1)), responses=[])
        with self.assertRaises(DomainError):
            u_statistic(sample, constant_spec())

    def test_zeroed_response_drops_its_pairs(self):
        rng = np.random.default_rng(3)
        spec = random_spec(rng, 1, 6)
        points = rng.uniform(size=(3, 1))
        full = Sample(points=points, responses=[0.8, -1.3, 0.0])
        pair = Sample(points=points[:2], responses=[0.8, -1.3])
        self.assertAlmostEqual(u_statistic_naive(full, spec), u_statistic_naive(pair, spec) * 2 / 3, places=12)

    def test_all_zero_responses(self):
        sample = Sample(points=np.random.default_rng(0).uniform(size=(10, 2)), responses=np.zeros(10))
        spec = random_spec(np.random.default_rng(1), 2, 5)
        self.assertEqual(u_statistic_naive(sample, spec), 0.0)
        self.assertEqual(u_statistic(sample, spec), 0.0)

    def test_spectral_matches_naive(self):
        rng = np.random.default_rng(2024)
        for trial in range(30):
            n = int(rng.integers(2, 61))
            d = int(rng.integers(1, 4))
            basis = ('fourier', 'haar', 'walsh')[trial % 3]
            spec = random_spec(rng, d, int(rng.integers(1, 25)), basis)
            sample = Sample(points=rng.uniform(size=(n, d)), responses=rng.normal(size=n))
            naive = u_statistic_naive(sample, spec)
            with self.subTest(trial=trial):
                self.assertLessEqual(abs(u_statistic(sample, spec) - naive), 1e-10 * (1 + abs(naive)))

    def test_scale_equivariance(self):
        rng = np.random.default_rng(8)
        spec = random_spec(rng, 2, 12)
        points = rng.uniform(size=(40, 2))
        responses = rng.normal(size=40)
        base = u_statistic(Sample(points, responses), spec)
        for tau in (0.1, 3.0, 17.0):
            scaled_spec = TestSpec(weights=spec.weights, threshold=0.0, tau2=tau ** 2)
            scaled = u_statistic(Sample(points, responses * tau), scaled_spec)
            self.assertAlmostEqual(scaled, base, delta=1e-12 * (1 + abs(base)))

    def test_plugin_divides_by_mean_square(self):
        rng = np.random.default_rng(12)
        spec = random_spec(rng, 1, 8)
        sample = Sample(rng.uniform(size=(25, 1)), rng.normal(size=25) * 2)
        plugin = TestSpec(weights=spec.weights, threshold=0.0, variance_mode=VarianceMode.PLUGIN, tau2=None)
        expected = u_statistic(sample, spec) / estimate_variance(sample)
        self.assertAlmostEqual(u_statistic(sample, plugin), expected, places=12)

    def test_run_test(self):
        sample = Sample(points=[[0.2], [0.7]], responses=[1.0, 1.0])
        outcome = run_test(sample, constant_spec())
        self.assertFalse(outcome.reject)
        self.assertEqual(outcome.n, 2)


class ThresholdTest(SimpleTestCase):

    def test_neyman_pearson(self):
        self.assertAlmostEqual(threshold_np(0.5), 0.0, places=14)
        self.assertAlmostEqual(threshold_np(0.05), 1.64485, places=5)
        with self.assertRaises(DomainError):
            threshold_np(1.0)

    def test_total_error(self):
        self.assertEqual(threshold_total(2.0), 1.0)

    def test_decide_is_strict(self):
        self.assertTrue(decide(1.7, 1.64485))
        self.assertFalse(decide(1.64485, 1.64485))
        self.assertFalse(decide(-3.0, 0.0))


class ShiftTest(SimpleTestCase):

    def test_single_coefficient(self):
        spec = make_test_spec(rate_weights(fourier_members(50)), alpha=0.05)
        self.assertAlmostEqual(h_shift({(1,): 0.1}, spec, 100), 0.1, places=14)

    def test_rate_form(self):
        members = fourier_members(50)
        spec = make_test_spec(rate_weights(members), alpha=0.05)
        theta = IndexWeights(members.indices, np.full(50, math.sqrt(0.01 / 50)))
        self.assertAlmostEqual(h_shift(theta, spec, 100), 100 * 0.01 / math.sqrt(100), places=12)

    def test_zero_and_outside_support(self):
        spec = make_test_spec(rate_weights(fourier_members(4)), alpha=0.05)
        self.assertEqual(h_shift({(1,): 0.0}, spec, 100), 0.0)
        self.assertEqual(h_shift({(7,): 0.5}, spec, 100), 0.0)

    def test_lower_bound(self):
        self.assertAlmostEqual(h_lower_bound(100, 0.1, 50, 20), 0.075, places=12)
        self.assertAlmostEqual(h_lower_bound(100, 0.1, 50, 10), 0.0, places=12)
        self.assertAlmostEqual(h_lower_bound(100, 0.1, 50, math.inf), 0.1, places=12)

    def test_lower_bound_is_trivial_below_unit_rc(self):
        self.assertEqual(h_lower_bound(100, 0.1, 50, 5), 0.0)
        self.assertEqual(h_lower_bound(100, 0.1, 50, 1), 0.0)


class EstimateVarianceTest(SimpleTestCase):

    def test_examples(self):
        self.assertAlmostEqual(estimate_variance(Sample([[0.1], [0.2], [0.3]], [2.0, 2.0, 2.0])), 4.0)
        self.assertEqual(estimate_variance(Sample([[0.1], [0.2]], [1.0, -1.0])), 1.0)

    def test_degenerate_sample(self):
        with self.assertRaises(DegenerateSampleError):
            estimate_variance(Sample([[0.1], [0.2]], [0.0, 0.0]))

    def test_noise_only(self):
        rng = np.random.default_rng(17)
        sample = Sample(rng.uniform(size=(10 ** 4, 1)), rng.normal(size=10 ** 4))
        self.assertAlmostEqual(estimate_variance(sample), 1.0, delta=0.05)


@tag('slow')
class NullDistributionTest(SimpleTestCase):

    def test_null_centering_and_variance(self):
        rng = np.random.default_rng(31)
        n, reps = 2000, 10 ** 4
        spec = make_test_spec(rate_weights(fourier_members(50)), alpha=0.05)
        values = np.array([
            u_statistic(Sample(rng.uniform(size=(n, 1)), rng.normal(size=n)), spec) for _ in range(reps)
        ])
        spread = values.std()
        self.assertLess(abs(values.mean()), 4 * spread / math.sqrt(reps))
        self.assertGreaterEqual(values.var(), 0.9)
        self.assertLessEqual(values.var(), 1.1)

    def test_shift_under_fixed_alternative(self):
        rng = np.random.default_rng(37)
        n, reps = 500, 4000
        members = fourier_members(10)
        spec = make_test_spec(rate_weights(members), alpha=0.05)
        theta = np.zeros(members.size)
        theta[:4] = [0.06, -0.05, 0.04, 0.03]
        values = []
        for _ in range(reps):
            points = rng.uniform(size=(n, 1))
            signal = evaluate('fourier', members.indices, points) @ theta
            values.append(u_statistic(Sample(points, signal + rng.normal(size=n)), spec))
        values = np.array(values)
        expected = (n - 1) / n * h_shift(IndexWeights(members.indices, theta), spec, n)
        self.assertLess(abs(values.mean() - expected), 3 * values.std() / math.sqrt(reps))
