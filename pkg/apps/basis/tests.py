import itertools
import math

import numpy as np
from django.test import SimpleTestCase, tag

from apps.core.exceptions import DomainError
from apps.families.domain import CoefficientFamily, Variant
from apps.families.services import enumerate_below
from .domain import BasisKind, DesignPoint
from .services import (
    design_block,
    evaluate,
    fourier_eval,
    gram_identity_check,
    haar_1d,
    haar_code,
    haar_eval,
    haar_level_shift,
    signed_to_code,
    walsh_eval,
)


class FourierTest(SimpleTestCase):

    def test_constant_function(self):
        self.assertEqual(fourier_eval((), (0.3, 0.7, 0.1)), 1.0)

    def test_cosine_at_origin(self):
        self.assertAlmostEqual(fourier_eval((1,), 0.0), math.sqrt(2), places=15)

    def test_product_vanishes_at_quarter_period(self):
        self.assertAlmostEqual(fourier_eval((1, -1), (0.25, 0.125)), 0.0, places=12)

    def test_sine_for_negative_indices(self):
        self.assertAlmostEqual(fourier_eval((-2,), 0.125), math.sqrt(2), places=12)

    def test_periodic_endpoints(self):
        self.assertAlmostEqual(fourier_eval((3, -2), (1.0, 1.0)), fourier_eval((3, -2), (0.0, 0.0)), places=12)

    def test_support_beyond_dimension(self):
        with self.assertRaises(DomainError):
            fourier_eval((1, 1), (0.5,))

    def test_design_points_are_validated(self):
        with self.assertRaises(DomainError):
            DesignPoint((0.5, 1.2))
        with self.assertRaises(DomainError):
            evaluate(BasisKind.FOURIER, [[1]], [[-0.1]])


class HaarTest(SimpleTestCase):

    def test_mother_function(self):
        self.assertEqual(haar_eval((haar_code(0, 1),), 0.25), 1.0)
        self.assertEqual(haar_eval((1,), 0.75), -1.0)
        self.assertEqual(haar_eval((0,), 0.9), 1.0)

    def test_breakpoints_take_the_right_value(self):
        self.assertEqual(haar_eval((1,), 0.5), -1.0)
        self.assertEqual(haar_eval((1,), 0.0), 1.0)
        self.assertEqual(haar_eval((1,), 1.0), -1.0)

    def test_codes_round_trip(self):
        for level in range(5):
            for shift in range(1, 2 ** level + 1):
                self.assertEqual(haar_level_shift(haar_code(level, shift)), (level, shift))

    def test_level_sums(self):
        points = np.random.default_rng(7).uniform(size=200)
        for level in range(6):
            codes = np.array([haar_code(level, k) for k in range(1, 2 ** level + 1)])
            values = haar_1d(codes[:, None], points[None, :])
            np.testing.assert_allclose((values ** 2).sum(axis=0), 2.0 ** level, rtol=1e-12)

    def test_values_are_scaled_signs(self):
        points = np.linspace(0, 1, 101)
        values = haar_1d(np.arange(1, 32)[:, None], points[None, :])
        levels = np.floor(np.log2(np.arange(1, 32)))[:, None]
        magnitudes = np.abs(values)
        self.assertTrue(np.all((magnitudes == 0) | np.isclose(magnitudes, 2 ** (levels / 2))))

    def test_negative_codes_are_rejected(self):
        with self.assertRaises(DomainError):
            haar_eval((-1,), 0.5)


class WalshTest(SimpleTestCase):

    def test_unit_modulus(self):
        rng = np.random.default_rng(11)
        for codes in itertools.product(range(9), repeat=2):
            t = rng.uniform(size=2)
            self.assertEqual(abs(walsh_eval(codes, t)), 1.0)

    def test_paley_order(self):
        self.assertEqual(walsh_eval((1,), 0.3), 1.0)
        self.assertEqual(walsh_eval((1,), 0.6), -1.0)
        self.assertEqual(walsh_eval((2,), 0.3), -1.0)
        self.assertEqual(walsh_eval((3,), 0.3), -1.0)
        self.assertEqual(walsh_eval((3,), 0.8), 1.0)

    def test_any_set_satisfies_the_sum_identity(self):
        members = np.array([[0, 3], [2, 5], [7, 0], [1, 1]])
        total, deviation = gram_identity_check(members, (0.37, 0.91), BasisKind.WALSH)
        self.assertEqual(total, 4.0)
        self.assertEqual(deviation, 0.0)


class SignedCodeTest(SimpleTestCase):

    def test_zigzag(self):
        np.testing.assert_array_equal(signed_to_code([0, 1, -1, 2, -2, 3]), [0, 1, 2, 3, 4, 5])


class GramIdentityTest(SimpleTestCase):

    def test_empty_set(self):
        self.assertEqual(gram_identity_check(np.zeros((0, 2), dtype=int), (0.2, 0.4)), (0.0, 0.0))

    def test_non_symmetric_set(self):
        total, deviation = gram_identity_check(np.array([[1]]), (0.0,))
        self.assertAlmostEqual(total, 2.0, places=12)
        self.assertAlmostEqual(deviation, 1.0, places=12)

    def test_sign_symmetric_fourier_sets(self):
        rng = np.random.default_rng(2024)
        cases = [
            (CoefficientFamily(Variant.SOBOLEV_SUM, d=2, sigma=1), 60),
            (CoefficientFamily(Variant.TENSOR_SOBOLEV, d=3, sigma=1), 300),
            (CoefficientFamily(Variant.ANOVA_AT_MOST, d=3, sigma=1, m=2), 300),
            (CoefficientFamily(Variant.ANALYTIC_STRIP, d=2, kappa=0.3), 100),
        ]
        for family, cutoff in cases:
            members = enumerate_below(family, cutoff)
            points = rng.uniform(size=(100, family.dimension))
            block = design_block(BasisKind.FOURIER, members, points)
            sums = (block ** 2).sum(axis=0)
            with self.subTest(family=family.describe()):
                self.assertLess(np.max(np.abs(sums - members.size)), 1e-9)
                total, deviation = gram_identity_check(members, points[0])
                self.assertLess(abs(deviation), 1e-9)


class EvaluateTest(SimpleTestCase):

    def test_matches_pointwise_evaluation(self):
        rng = np.random.default_rng(5)
        indices = np.array([[0, 0], [1, -2], [-3, 0], [2, 2]])
        points = rng.uniform(size=(7, 2))
        matrix = evaluate(BasisKind.FOURIER, indices, points)
        self.assertEqual(matrix.shape, (7, 4))
        for i, j in itertools.product(range(7), range(4)):
            self.assertAlmostEqual(matrix[i, j], fourier_eval(indices[j], points[i]), places=12)

    def test_haar_uses_codes_of_signed_entries(self):
        points = np.array([[0.3, 0.6]])
        value = evaluate(BasisKind.HAAR, np.array([[-1, 2]]), points)[0, 0]
        self.assertEqual(value, haar_eval((2, 3), (0.3, 0.6)))

    @tag('slow')
    def test_sampled_orthonormality(self):
        rng = np.random.default_rng(99)
        total_points, chunk = 10 ** 6, 10 ** 5
        for basis, d in itertools.product(BasisKind.values, (1, 2)):
            indices = np.array(list(itertools.product(range(-3, 4), repeat=d)))
            gram = np.zeros((len(indices), len(indices)))
            second = np.zeros_like(gram)
            for _ in range(total_points // chunk):
                block = design_block(basis, indices, rng.uniform(size=(chunk, d)))
                gram += block @ block.T
                squared = block ** 2
                second += squared @ squared.T
            gram /= total_points
            spread = np.sqrt(np.maximum(second / total_points - gram ** 2, 1e-12))
            deviation = np.abs(gram - np.eye(len(indices)))
            with self.subTest(basis=basis, d=d):
                self.assertTrue(np.all(deviation <= 5 * spread / math.sqrt(total_points)))
