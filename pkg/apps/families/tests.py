import itertools
import math

import numpy as np
from django.test import SimpleTestCase, tag

from apps.core.exceptions import DomainError, ResourceLimitError
from .domain import CoefficientFamily, FiniteFamily, IndexWeights, MultiIndex, Variant
from .serializers import dump_family, load_family
from .services import (
    asymptotic_count,
    coefficient,
    embedding_condition_holds,
    enumerate_below,
    sw_active_dimension,
)


def sobolev_sum(d, sigma):
    return CoefficientFamily(Variant.SOBOLEV_SUM, d=d, sigma=sigma)


def member_set(index_set):
    return {index.entries for index in index_set.keys()}


class MultiIndexTest(SimpleTestCase):

    def test_trailing_zeros_are_dropped(self):
        self.assertEqual(MultiIndex.of(1, -2, 0, 0).entries, (1, -2))
        self.assertEqual(MultiIndex.of(0, 0), MultiIndex())

    def test_support_size_counts_nonzero_entries(self):
        self.assertEqual(MultiIndex.of(0, 3, 0, -1).support_size, 2)
        self.assertEqual(MultiIndex().support_size, 0)

    def test_index_weights_as_dict(self):
        weights = IndexWeights.from_mapping({(1,): 0.5, (0, 2): 0.25})
        self.assertEqual(weights.as_dict(), {MultiIndex.of(1): 0.5, MultiIndex.of(0, 2): 0.25})


class CoefficientFamilyTest(SimpleTestCase):

    def test_parameter_ranges_are_validated(self):
        with self.assertRaises(DomainError):
            CoefficientFamily(Variant.SOBOLEV_SUM, d=2, sigma=0)
        with self.assertRaises(DomainError):
            CoefficientFamily(Variant.ANOVA_EXACT, d=2, sigma=1, m=3)
        with self.assertRaises(DomainError):
            CoefficientFamily(Variant.ANALYTIC_STRIP, d=1)
        with self.assertRaises(DomainError):
            CoefficientFamily(Variant.SLOAN_WOZNIAKOWSKI, sigma=1)

    def test_labels_parse_as_variants(self):
        family = CoefficientFamily('TensorSobolev', d=2, sigma=1)
        self.assertEqual(family.variant, Variant.TENSOR_SOBOLEV)

    def test_sloan_wozniakowski_ignores_dimension(self):
        family = CoefficientFamily(Variant.SLOAN_WOZNIAKOWSKI, d=5, sigma=1, s=2)
        self.assertIsNone(family.dimension)


class CoefficientTest(SimpleTestCase):

    def test_sobolev_sum_example(self):
        self.assertAlmostEqual(coefficient(sobolev_sum(2, 1), (1, 1)), math.sqrt(8 * math.pi ** 2), places=12)

    def test_zero_index_of_product_families(self):
        for d in (1, 3):
            self.assertEqual(coefficient(CoefficientFamily(Variant.TENSOR_SOBOLEV, d=d, sigma=1.5), (0,) * d), 1.0)
        self.assertEqual(coefficient(CoefficientFamily(Variant.ANALYTIC_STRIP, d=3, kappa=0.7), (0, 0, 0)), 1.0)
        self.assertEqual(coefficient(CoefficientFamily(Variant.SLOAN_WOZNIAKOWSKI, sigma=1, s=1), ()), 1.0)

    def test_sloan_wozniakowski_weights_coordinates(self):
        family = CoefficientFamily(Variant.SLOAN_WOZNIAKOWSKI, sigma=1, s=2)
        self.assertAlmostEqual(coefficient(family, (0, 0, 1)), 9 * 2 * math.pi, places=10)

    def test_strip_coefficient(self):
        family = CoefficientFamily(Variant.ANALYTIC_STRIP, d=2, kappa=0.5)
        expected = math.sqrt(math.cosh(math.pi) * math.cosh(2 * math.pi))
        self.assertAlmostEqual(coefficient(family, (1, -2)), expected, places=9)

    def test_indices_outside_the_lattice_are_rejected(self):
        with self.assertRaisesMessage(DomainError, 'zero index'):
            coefficient(sobolev_sum(2, 1), (0, 0))
        with self.assertRaisesMessage(DomainError, 'exactly m=1'):
            coefficient(CoefficientFamily(Variant.ANOVA_EXACT, d=3, sigma=1, m=1), (1, 1))
        with self.assertRaisesMessage(DomainError, 'at most m=1'):
            coefficient(CoefficientFamily(Variant.ANOVA_AT_MOST, d=3, sigma=1, m=1), (1, 0, 1))
        with self.assertRaisesMessage(DomainError, 'beyond dimension'):
            coefficient(sobolev_sum(2, 1), (1, 1, 1))

    def test_finite_family_table(self):
        family = FiniteFamily((1.0, 2.0, 3.0))
        self.assertEqual(coefficient(family, (2,)), 3.0)
        with self.assertRaises(DomainError):
            coefficient(family, (3,))


class EnumerateBelowTest(SimpleTestCase):

    def test_one_dimensional_sobolev(self):
        index_set = enumerate_below(sobolev_sum(1, 1), 10)
        self.assertEqual(index_set.size, 2)
        self.assertEqual(member_set(index_set), {(-1,), (1,)})

    def test_tensor_product_example(self):
        index_set = enumerate_below(CoefficientFamily(Variant.TENSOR_SOBOLEV, d=2, sigma=1), 10)
        self.assertEqual(member_set(index_set), {(), (1,), (-1,), (0, 1), (0, -1)})
        self.assertEqual(index_set.coefficients[0], 1.0)

    def test_empty_below_smallest_coefficient(self):
        index_set = enumerate_below(CoefficientFamily(Variant.TENSOR_SOBOLEV, d=2, sigma=1), 0.5)
        self.assertEqual(index_set.size, 0)

    def test_boundary_coefficient_is_excluded(self):
        family = sobolev_sum(1, 1)
        self.assertEqual(enumerate_below(family, coefficient(family, (1,))).size, 0)

    def test_non_positive_cutoff_is_rejected(self):
        with self.assertRaises(DomainError):
            enumerate_below(sobolev_sum(1, 1), 0)

    def test_cap_is_reported(self):
        with self.assertRaises(ResourceLimitError) as context:
            enumerate_below(sobolev_sum(2, 1), 1e4, max_indices=1000)
        self.assertEqual(context.exception.cap, 1000)

    def test_single_coordinate_overflow_names_the_cap(self):
        with self.assertRaises(ResourceLimitError) as context:
            enumerate_below(sobolev_sum(1, 1), 1000, max_indices=5)
        self.assertEqual(context.exception.cap, 5)
        self.assertIn('exceeds the enumeration cap of 5 indices', str(context.exception))

    def test_cap_counts_candidates_before_the_lattice_constraint(self):
        family = CoefficientFamily(Variant.ANOVA_EXACT, d=2, sigma=1, m=2)
        with self.assertRaises(ResourceLimitError) as context:
            enumerate_below(family, 100, max_indices=20)
        self.assertIn('before the lattice constraint', str(context.exception))
        self.assertEqual(enumerate_below(family, 100, max_indices=100).size, 12)

    def test_members_are_sorted_by_coefficient(self):
        index_set = enumerate_below(CoefficientFamily(Variant.SOBOLEV_EUCLID, d=2, sigma=1), 60)
        self.assertTrue(np.all(np.diff(index_set.coefficients) >= 0))

    def test_sign_symmetry(self):
        families = [
            sobolev_sum(2, 1),
            CoefficientFamily(Variant.SOBOLEV_EUCLID, d=3, sigma=1.5),
            CoefficientFamily(Variant.TENSOR_SOBOLEV, d=3, sigma=1),
            CoefficientFamily(Variant.ANOVA_AT_MOST, d=3, sigma=1, m=2),
            CoefficientFamily(Variant.ANALYTIC_STRIP, d=2, kappa=0.4),
            CoefficientFamily(Variant.SLOAN_WOZNIAKOWSKI, sigma=1, s=1),
        ]
        for family in families:
            index_set = enumerate_below(family, 150)
            lookup = dict(zip([index.entries for index in index_set.keys()], index_set.coefficients))
            with self.subTest(family=family.describe()):
                for entries, value in lookup.items():
                    for signs in itertools.product((1, -1), repeat=len(entries)):
                        flipped = MultiIndex(tuple(e * s for e, s in zip(entries, signs))).entries
                        self.assertIn(flipped, lookup)
                        self.assertAlmostEqual(lookup[flipped], value, places=9)

    def test_enumeration_is_monotone_in_cutoff(self):
        family = CoefficientFamily(Variant.ANOVA_EXACT, d=3, sigma=1, m=2)
        smaller = member_set(enumerate_below(family, 200))
        larger = member_set(enumerate_below(family, 400))
        self.assertTrue(smaller < larger)

    def test_anova_counts_decompose_by_interaction_order(self):
        d, m, sigma, cutoff = 3, 2, 1.0, 500.0
        at_most = enumerate_below(CoefficientFamily(Variant.ANOVA_AT_MOST, d=d, sigma=sigma, m=m), cutoff).size
        expected = 1
        for j in range(1, m + 1):
            exact = enumerate_below(CoefficientFamily(Variant.ANOVA_EXACT, d=j, sigma=sigma, m=j), cutoff).size
            expected += math.comb(d, j) * exact
        self.assertEqual(at_most, expected)

    def test_sloan_wozniakowski_small_cutoff(self):
        family = CoefficientFamily(Variant.SLOAN_WOZNIAKOWSKI, sigma=1, s=1)
        index_set = enumerate_below(family, 15)
        self.assertEqual(member_set(index_set), {(), (1,), (-1,), (2,), (-2,), (0, 1), (0, -1)})
        self.assertEqual(sw_active_dimension(family, 15), 2)

    def test_brute_force_agreement(self):
        cases = [
            (sobolev_sum(2, 1), 100, 100),
            (CoefficientFamily(Variant.SOBOLEV_EUCLID, d=2, sigma=1.5), 100, 22),
            (CoefficientFamily(Variant.TENSOR_SOBOLEV, d=2, sigma=1), 100, 100),
            (CoefficientFamily(Variant.ANOVA_EXACT, d=2, sigma=1, m=1), 100, 100),
            (CoefficientFamily(Variant.ANOVA_AT_MOST, d=2, sigma=2, m=1), 100, 10),
            (CoefficientFamily(Variant.ANALYTIC_STRIP, d=2, kappa=0.5), 100, 10),
            (CoefficientFamily(Variant.SLOAN_WOZNIAKOWSKI, sigma=1, s=1), 15, 10),
        ]
        for family, cutoff, box in cases:
            expected = set()
            for entries in itertools.product(range(-box, box + 1), repeat=2):
                try:
                    value = coefficient(family, entries)
                except DomainError:
                    continue
                if value < cutoff:
                    expected.add(MultiIndex(entries).entries)
            with self.subTest(family=family.describe()):
                self.assertEqual(member_set(enumerate_below(family, cutoff)), expected)

    def test_finite_family_enumeration(self):
        index_set = enumerate_below(FiniteFamily((3.0, 1.0, 2.0, 5.0)), 3.0)
        self.assertEqual([index.entries for index in index_set.keys()], [(1,), (2,)])


class AsymptoticCountTest(SimpleTestCase):

    def test_one_dimensional_sobolev(self):
        family = sobolev_sum(1, 2)
        self.assertAlmostEqual(asymptotic_count(family, 1e4), 100 / math.pi, places=9)
        self.assertEqual(enumerate_below(family, 1e4).size, 30)

    def test_euclidean_sobolev(self):
        family = CoefficientFamily(Variant.SOBOLEV_EUCLID, d=2, sigma=1)
        self.assertAlmostEqual(asymptotic_count(family, 100), 1e4 / (4 * math.pi), places=7)

    def test_absent_where_no_constant_is_known(self):
        self.assertIsNone(asymptotic_count(CoefficientFamily(Variant.SLOAN_WOZNIAKOWSKI, sigma=1, s=1), 1e3))
        self.assertIsNone(asymptotic_count(CoefficientFamily(Variant.TENSOR_SOBOLEV, d=2, sigma=1), 0.5))

    def test_tensor_reduces_to_sobolev_in_one_dimension(self):
        tensor = CoefficientFamily(Variant.TENSOR_SOBOLEV, d=1, sigma=1.5)
        self.assertAlmostEqual(asymptotic_count(tensor, 1e3), asymptotic_count(sobolev_sum(1, 1.5), 1e3), places=9)

    @tag('slow')
    def test_sobolev_counts_approach_the_asymptotics(self):
        cases = [
            (sobolev_sum(2, 2), 1e6),
            (sobolev_sum(3, 1), 200),
        ]
        for family, cutoff in cases:
            ratio = enumerate_below(family, cutoff).size / asymptotic_count(family, cutoff)
            with self.subTest(family=family.describe()):
                self.assertGreaterEqual(ratio, 0.9)
                self.assertLessEqual(ratio, 1.1)

    def test_one_dimensional_count_at_large_cutoff(self):
        family = sobolev_sum(1, 2)
        ratio = enumerate_below(family, 1e8).size / asymptotic_count(family, 1e8)
        self.assertGreaterEqual(ratio, 0.97)
        self.assertLessEqual(ratio, 1.03)

    @tag('slow')
    def test_euclidean_count_at_a_million_indices(self):
        family = CoefficientFamily(Variant.SOBOLEV_EUCLID, d=2, sigma=1)
        members = enumerate_below(family, 3600)
        self.assertGreater(members.size, 10 ** 6)
        # largest C with N(C) <= 10^6: members are sorted by coefficient
        cutoff = float(members.coefficients[10 ** 6])
        count = members.restrict_below(cutoff).size
        self.assertLessEqual(count, 10 ** 6)
        ratio = count / asymptotic_count(family, cutoff)
        self.assertGreaterEqual(ratio, 0.95)
        self.assertLessEqual(ratio, 1.05)


class EmbeddingConditionTest(SimpleTestCase):

    def test_smoothness_table(self):
        self.assertTrue(embedding_condition_holds(sobolev_sum(2, 0.6)))
        self.assertFalse(embedding_condition_holds(sobolev_sum(4, 0.9)))
        self.assertTrue(embedding_condition_holds(CoefficientFamily(Variant.TENSOR_SOBOLEV, d=5, sigma=0.3)))
        self.assertFalse(embedding_condition_holds(CoefficientFamily(Variant.SLOAN_WOZNIAKOWSKI, sigma=2, s=0.5)))
        self.assertTrue(embedding_condition_holds(CoefficientFamily(Variant.ANALYTIC_STRIP, d=6, kappa=0.1)))


class FamilySerializerTest(SimpleTestCase):

    def test_load_and_dump(self):
        family = load_family({'variant': 'SobolevSum', 'd': 2, 'sigma': 1.0})
        self.assertEqual(family, sobolev_sum(2, 1.0))
        self.assertEqual(dump_family(family), {'variant': 'sobolev-sum', 'd': 2, 'sigma': 1.0})

    def test_invalid_family_raises_domain_error(self):
        with self.assertRaises(DomainError):
            load_family({'variant': 'anova-exact', 'd': 2, 'sigma': 1.0, 'm': 5})
        with self.assertRaises(DomainError):
            load_family({'variant': 'banach'})

    def test_finite_table(self):
        family = load_family({'coefficients': [1, 1, 1, 1]})
        self.assertEqual(family, FiniteFamily((1.0, 1.0, 1.0, 1.0)))
