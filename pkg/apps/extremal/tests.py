import itertools
import math

import numpy as np
from django.test import SimpleTestCase
from scipy.optimize import minimize

from apps.core.exceptions import DomainError, InfeasibleProblemError
from apps.families.domain import CoefficientFamily, FiniteFamily, Variant
from apps.families.services import enumerate_below
from .domain import ExtremalProblem
from .serializers import ExtremalSolutionSerializer
from .services import (
    asymptotic_u_squared,
    balance_constant,
    calibrate_radius,
    cutoff_scaling_probe,
    rate_index_set,
    separation_rate,
    solve_extremal,
    test_weights,
    u_squared_rate,
)

SOBOLEV_1_2 = CoefficientFamily(Variant.SOBOLEV_SUM, d=1, sigma=2)
SOBOLEV_1_1 = CoefficientFamily(Variant.SOBOLEV_SUM, d=1, sigma=1)
LARGE_SIZES = [1e6, 1e8, 1e10, 1e12]


def c1_one_two():
    return 5 * math.pi / 9 ** 1.25


def brute_force_u_squared(coefficients, n, r, b=1.0, B=1.0):
    """min 1/2 sum x^2 over x >= 0, sum x = n (B r)^2, sum c^2 x <= n b^2"""
    c_sq = np.asarray(coefficients, dtype=float) ** 2
    energy = n * (B * r) ** 2
    start = np.full(c_sq.size, energy / c_sq.size)
    result = minimize(
        lambda x: 0.5 * np.dot(x, x),
        start,
        jac=lambda x: x,
        method='SLSQP',
        bounds=[(0.0, None)] * c_sq.size,
        constraints=[
            {'type': 'eq', 'fun': lambda x: x.sum() - energy, 'jac': lambda x: np.ones_like(x)},
            {'type': 'ineq', 'fun': lambda x: n * b ** 2 - np.dot(c_sq, x), 'jac': lambda x: -c_sq},
        ],
        options={'ftol': 1e-15, 'maxiter': 1000},
    )
    return result.fun


class ExtremalProblemTest(SimpleTestCase):

    def test_invalid_problems_are_rejected(self):
        with self.assertRaises(DomainError):
            ExtremalProblem(SOBOLEV_1_2, n=1, r=0.1)
        with self.assertRaises(DomainError):
            ExtremalProblem(SOBOLEV_1_2, n=100, r=0)
        with self.assertRaises(DomainError):
            ExtremalProblem(SOBOLEV_1_2, n=100, r=0.1, b=-1)


class SolveExtremalTest(SimpleTestCase):

    def test_single_level_synthetic_family(self):
        solution = solve_extremal(ExtremalProblem(FiniteFamily((1.0,) * 4), n=100, r=0.5))
        np.testing.assert_allclose(solution.v_squared, 6.25)
        self.assertAlmostEqual(solution.u_squared, 78.125, places=9)
        self.assertFalse(solution.second_constraint_active)
        self.assertTrue(math.isinf(solution.cutoff))

    def test_infeasible_radius(self):
        with self.assertRaises(InfeasibleProblemError):
            solve_extremal(ExtremalProblem(SOBOLEV_1_1, n=100, r=0.5))

    def test_constraints_and_identities_hold(self):
        for family in (SOBOLEV_1_2, CoefficientFamily(Variant.SOBOLEV_EUCLID, d=2, sigma=1),
                       CoefficientFamily(Variant.TENSOR_SOBOLEV, d=2, sigma=1.5)):
            problem = ExtremalProblem(family, n=1000, r=0.01)
            solution = solve_extremal(problem)
            with self.subTest(family=family.describe()):
                self.assertTrue(solution.second_constraint_active)
                self.assertLess(solution.residuals['norm'], 1e-8)
                self.assertLess(solution.residuals['smoothness'], 1e-8)
                self.assertAlmostEqual(solution.I1, solution.I0 + solution.I2, delta=1e-9 * solution.I1)
                self.assertGreaterEqual(solution.I1, solution.I2)
                self.assertGreaterEqual(solution.cutoff ** 2, problem.target_ratio)
                clamp = np.clip(1 - (solution.coefficients / solution.cutoff) ** 2, 0, None)
                np.testing.assert_allclose(solution.v_squared, solution.level * clamp, rtol=1e-12)
                self.assertAlmostEqual(
                    solution.u_squared, 0.5 * solution.level ** 2 * solution.I0, delta=1e-12 * solution.u_squared
                )

    def test_envelope_bounds(self):
        family = CoefficientFamily(Variant.SOBOLEV_EUCLID, d=2, sigma=1)
        solution = solve_extremal(ExtremalProblem(family, n=5000, r=0.005))
        upper = enumerate_below(family, solution.cutoff).size
        lower = enumerate_below(family, solution.cutoff / 2).size
        self.assertLessEqual(0.75 * lower, solution.I1)
        self.assertLessEqual(solution.I1, upper)
        self.assertLessEqual(0.75 ** 2 * lower, solution.I0)
        self.assertLessEqual(solution.I0, upper)

    def test_rescaling_identity(self):
        n, r = 1000, 0.002
        reference = solve_extremal(ExtremalProblem(SOBOLEV_1_2, n, r)).u_squared
        doubled = solve_extremal(ExtremalProblem(SOBOLEV_1_2, n, r, b=2, B=2)).u_squared
        self.assertAlmostEqual(doubled / reference, 16.0, delta=16e-6)

        for b, B in itertools.product((0.5, 1.0, 2.0), repeat=2):
            left = solve_extremal(ExtremalProblem(SOBOLEV_1_2, n, r, b=b, B=B)).u_squared
            right = b ** 4 * solve_extremal(ExtremalProblem(SOBOLEV_1_2, n, r, b=1.0, B=B / b)).u_squared
            with self.subTest(b=b, B=B):
                self.assertAlmostEqual(left / right, 1.0, delta=1e-6)

    def test_midpoint_convexity_in_squared_scales(self):
        n, r = 1000, 0.002
        grid = np.linspace(0.5, 2.0, 5)
        values = {
            (i, j): solve_extremal(
                ExtremalProblem(SOBOLEV_1_2, n, r, b=math.sqrt(grid[i]), B=math.sqrt(grid[j]))
            ).u_squared
            for i in range(5) for j in range(5)
        }
        for (i1, j1), (i2, j2) in itertools.combinations(values, 2):
            if (i1 + i2) % 2 or (j1 + j2) % 2:
                continue
            middle = values[((i1 + i2) // 2, (j1 + j2) // 2)]
            average = 0.5 * (values[(i1, j1)] + values[(i2, j2)])
            self.assertLessEqual(middle, average * (1 + 1e-8))

    def test_matches_direct_minimization(self):
        cases = [
            ((1.0, 2.0, 3.0, 4.0, 5.0), 10, 0.5),
            ((1.0, 1.0, 2.0, 3.0, 5.0, 8.0, 13.0, 21.0), 10, 0.2),
            ((2.0, 2.5, 3.0), 50, 0.3),
        ]
        for coefficients, n, r in cases:
            solution = solve_extremal(ExtremalProblem(FiniteFamily(coefficients), n, r))
            expected = brute_force_u_squared(coefficients, n, r)
            with self.subTest(coefficients=coefficients):
                self.assertAlmostEqual(solution.u_squared / expected, 1.0, delta=1e-4)

    def test_solver_approaches_closed_form(self):
        n = 10 ** 6
        ratios = []
        for r in (1e-3, 1e-4, 1e-5):
            solution = solve_extremal(ExtremalProblem(SOBOLEV_1_2, n, r))
            ratios.append(solution.u_squared / asymptotic_u_squared(SOBOLEV_1_2, n, r))
        deviations = [abs(ratio - 1.0) for ratio in ratios]
        self.assertEqual(deviations, sorted(deviations, reverse=True))
        self.assertLess(deviations[-1], 0.05)


class TestWeightsTest(SimpleTestCase):

    def test_equal_coefficients_give_rate_weights(self):
        solution = solve_extremal(ExtremalProblem(FiniteFamily((1.0,) * 50), n=100, r=0.5))
        np.testing.assert_allclose(test_weights(solution).values, 0.2, rtol=1e-12)

    def test_normalization(self):
        for family, n, r in ((SOBOLEV_1_2, 1000, 0.01), (FiniteFamily((1.0, 2.0, 3.0, 4.0, 5.0)), 10, 0.5)):
            weights = test_weights(solve_extremal(ExtremalProblem(family, n, r)))
            self.assertAlmostEqual(0.5 * math.fsum(weights.values ** 2), 1.0, delta=1e-10)

    def test_clamped_indices_get_zero_weight(self):
        solution = solve_extremal(ExtremalProblem(FiniteFamily((1.0, 2.0, 3.0, 4.0, 5.0)), 10, 0.5))
        weights = test_weights(solution).values
        outside = solution.coefficients >= solution.cutoff
        self.assertTrue(outside.any())
        self.assertTrue(np.all(weights[outside] == 0))
        self.assertTrue(np.all(weights[~outside] > 0))


class BalanceConstantTest(SimpleTestCase):

    def test_interior_root(self):
        self.assertAlmostEqual(balance_constant(SOBOLEV_1_1, 1000), (1e6 / 6) ** 0.25, places=9)
        self.assertAlmostEqual(separation_rate(SOBOLEV_1_1, 1000), 0.04949, places=5)

    def test_jump_point(self):
        self.assertAlmostEqual(balance_constant(SOBOLEV_1_1, 3), 2 * math.pi, places=12)

    def test_monotone_in_sample_size(self):
        for family in (SOBOLEV_1_2, CoefficientFamily(Variant.ANALYTIC_STRIP, d=2, kappa=1)):
            self.assertGreaterEqual(balance_constant(family, 2000), balance_constant(family, 1000))

    def fitted_slope(self, family, sizes):
        rates = [separation_rate(family, int(n)) for n in sizes]
        return np.polyfit(np.log(sizes), np.log(rates), 1)[0]

    def test_rate_exponent(self):
        self.assertAlmostEqual(self.fitted_slope(SOBOLEV_1_2, LARGE_SIZES), -4 / 9, delta=0.02)

    def test_rate_exponents_across_smoothness_and_dimension(self):
        self.assertAlmostEqual(self.fitted_slope(SOBOLEV_1_1, LARGE_SIZES), -2 / 5, delta=0.02)
        # d=2 stays on moderate n; larger n needs more indices than the default cap
        sobolev_2_1 = CoefficientFamily(Variant.SOBOLEV_SUM, d=2, sigma=1)
        self.assertAlmostEqual(self.fitted_slope(sobolev_2_1, [1e3, 1e4, 1e5, 1e6]), -1 / 3, delta=0.02)

    def test_analytic_rate_exponent(self):
        family = CoefficientFamily(Variant.ANALYTIC_STRIP, d=1, kappa=1)
        self.assertAlmostEqual(self.fitted_slope(family, LARGE_SIZES), -0.5, delta=0.03)

    def test_analytic_rate_is_logarithmic(self):
        family = CoefficientFamily(Variant.ANALYTIC_STRIP, d=1, kappa=1)
        scaled = [
            separation_rate(family, n) * math.sqrt(n) / math.log(n) ** 0.25
            for n in (10 ** 3, 10 ** 5, 10 ** 7, 10 ** 9)
        ]
        self.assertLess(max(scaled) / min(scaled), 2.0)

    def test_rate_index_set(self):
        self.assertEqual(rate_index_set(SOBOLEV_1_1, 1000).size, 6)
        self.assertGreater(rate_index_set(SOBOLEV_1_1, 1000, scale=2.0).size, 6)

    def test_sample_size_must_be_at_least_two(self):
        with self.assertRaises(DomainError):
            balance_constant(SOBOLEV_1_1, 1)


class RateFormulaTest(SimpleTestCase):

    def test_rate_u_squared(self):
        self.assertAlmostEqual(u_squared_rate(1000, 0.05, 6), 0.5208333333, places=9)
        self.assertEqual(u_squared_rate(500, 0.0, 7), 0.0)
        self.assertAlmostEqual(u_squared_rate(100, 0.1, 50), 0.01, places=12)
        with self.assertRaises(DomainError):
            u_squared_rate(100, 0.1, 0)

    def test_sobolev_closed_form(self):
        expected = c1_one_two() * 1e8 * 0.01 ** 4.5
        self.assertAlmostEqual(asymptotic_u_squared(SOBOLEV_1_2, 10 ** 4, 0.01) / expected, 1.0, places=12)

    def test_tensor_matches_sobolev_in_one_dimension(self):
        for sigma in (0.75, 1.0, 2.5):
            tensor = CoefficientFamily(Variant.TENSOR_SOBOLEV, d=1, sigma=sigma)
            sobolev = CoefficientFamily(Variant.SOBOLEV_SUM, d=1, sigma=sigma)
            self.assertAlmostEqual(
                asymptotic_u_squared(tensor, 5000, 0.02) / asymptotic_u_squared(sobolev, 5000, 0.02), 1.0, places=12
            )

    def test_absent_closed_forms(self):
        family = CoefficientFamily(Variant.SLOAN_WOZNIAKOWSKI, sigma=1, s=1)
        self.assertIsNone(asymptotic_u_squared(family, 1000, 0.01))
        self.assertIsNone(asymptotic_u_squared(SOBOLEV_1_2, 1000, 1.5))


class ProbeTest(SimpleTestCase):

    def test_cutoff_scaling_probe(self):
        ratios = cutoff_scaling_probe(SOBOLEV_1_2, 2000, 0.005, [0.5, 1.0, 2.0])
        self.assertAlmostEqual(ratios[1], 1.0, places=12)
        self.assertLess(ratios[0], 1.0)
        self.assertGreater(ratios[2], 1.0)

    def test_calibrate_radius(self):
        radius = calibrate_radius(SOBOLEV_1_2, 20000, 2.0)
        solution = solve_extremal(ExtremalProblem(SOBOLEV_1_2, 20000, radius))
        self.assertAlmostEqual(solution.u, 2.0, delta=1e-6)


class ExtremalSolutionSerializerTest(SimpleTestCase):

    def test_json_layout(self):
        solution = solve_extremal(ExtremalProblem(SOBOLEV_1_2, 1000, 0.01))
        data = ExtremalSolutionSerializer(solution).data
        for key in ('C', 'z0_sq', 'u_sq', 'I0', 'I1', 'I2', 'weights'):
            self.assertIn(key, data)
        self.assertEqual(len(data['weights']), solution.index_set.size)
        self.assertEqual(set(data['weights'][0]), {'index', 'c', 'v_sq', 'w'})

    def test_infinite_cutoff_is_null(self):
        solution = solve_extremal(ExtremalProblem(FiniteFamily((1.0,) * 4), n=100, r=0.5))
        self.assertIsNone(ExtremalSolutionSerializer(solution).data['C'])
