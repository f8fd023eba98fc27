"""
Services for the extremal app
Water-filling solver, balance equation, separation rates and the
closed-form asymptotics of u_n^2
"""

import logging
import math

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln

from apps.core.exceptions import DomainError, InfeasibleProblemError
from apps.families.domain import IndexSet, IndexWeights, Variant
from apps.families.services import enumerate_below
from .domain import ExtremalProblem, ExtremalSolution, shape_factors

logger = logging.getLogger(__name__)

SOLVER_RTOL = 1e-12
_MAX_DOUBLINGS = 200


def water_filling_sums(coefficients, cutoff):
    """
    I0, I1, I2 of the clamp a_l = (1 - (c_l/C)^2)_+

    I0 = sum a^2, I1 = sum a, I2 = sum (c/C)^2 a
    """
    clamp = shape_factors(coefficients, cutoff)
    if math.isinf(cutoff):
        ratio = np.zeros_like(clamp)
    else:
        ratio = (np.asarray(coefficients, dtype=float) / cutoff) ** 2
    return (
        math.fsum(clamp * clamp),
        math.fsum(clamp),
        math.fsum(ratio * clamp),
    )


def smallest_coefficient(family, max_indices=None):
    """min c_l over the lattice"""
    if family.is_finite:
        return min(family.coefficients)
    cutoff = 1.0
    for _ in range(_MAX_DOUBLINGS):
        index_set = enumerate_below(family, cutoff, max_indices)
        if index_set.size:
            return float(index_set.coefficients[0])
        cutoff *= 2.0
    raise DomainError(f"No coefficient of {family.describe()} is finite")


def _full_finite_set(family):
    table = np.asarray(family.coefficients)
    return IndexSet(math.inf, np.arange(table.size).reshape(-1, 1), table, family.describe())


def _ratio(coefficients, cutoff):
    _, i1, i2 = water_filling_sums(coefficients, cutoff)
    return cutoff * cutoff * i2 / i1 if i1 > 0 else 0.0


def _build_solution(problem, cutoff, index_set, active):
    coefficients = index_set.coefficients
    i0, i1, i2 = water_filling_sums(coefficients, cutoff)
    level = problem.energy / i1
    v_squared = level * shape_factors(coefficients, cutoff)

    residuals = {
        'norm': abs(math.fsum(v_squared) - problem.energy) / problem.energy,
        'identity': abs(i1 - i0 - i2) / i1,
    }
    if active:
        budget = problem.n * problem.b ** 2
        residuals['smoothness'] = abs(math.fsum(coefficients ** 2 * v_squared) - budget) / budget

    return ExtremalSolution(
        problem=problem,
        cutoff=cutoff,
        level=level,
        index_set=index_set,
        v_squared=v_squared,
        I0=i0,
        I1=i1,
        I2=i2,
        u_squared=0.5 * level * level * i0,
        second_constraint_active=active,
        residuals=residuals,
    )


def solve_extremal(problem: ExtremalProblem, max_indices=None):
    """
    Water-filling solution of the extremal problem

    The cutoff solves C^2 I2(C) / I1(C) = b^2 / (B r)^2 on C > min c_l; the
    left side is nondecreasing, so a bracket found by doubling is refined
    with Brent's method.

    Raises:
        InfeasibleProblemError: if the target ratio is not above (min c_l)^2
        ResourceLimitError: if the bracket needs more indices than the cap
    """
    family = problem.family
    target = problem.target_ratio
    c_min = smallest_coefficient(family, max_indices)

    if target <= c_min ** 2:
        logger.warning(
            f"Infeasible extremal problem for {family.describe()}: "
            f"b/(B r) = {math.sqrt(target):.6g} does not exceed min c_l = {c_min:.6g}"
        )
        raise InfeasibleProblemError(
            f"No cutoff satisfies both constraints: b/(B r) = {math.sqrt(target):.6g} "
            f"must exceed the smallest coefficient {c_min:.6g}"
        )

    if family.is_finite:
        full = _full_finite_set(family)
        if math.fsum(full.coefficients ** 2) / full.size <= target:
            logger.debug(f"Norm constraint slack for {family.describe()}; equal weights")
            return _build_solution(problem, math.inf, full, active=False)

    high = 2.0 * c_min
    index_set = full if family.is_finite else enumerate_below(family, high, max_indices)
    for _ in range(_MAX_DOUBLINGS):
        if _ratio(index_set.coefficients, high) >= target:
            break
        high *= 2.0
        if not family.is_finite:
            index_set = enumerate_below(family, high, max_indices)
    else:
        raise InfeasibleProblemError(f"Could not bracket the cutoff below C={high:.6g}")

    low = c_min * (1.0 + SOLVER_RTOL)
    coefficients = index_set.coefficients

    def excess(cutoff):
        return _ratio(coefficients, cutoff) - target

    if excess(low) >= 0:
        cutoff = low
    else:
        cutoff = brentq(excess, low, high, xtol=1e-300, rtol=SOLVER_RTOL, maxiter=500)

    members = index_set.restrict_below(cutoff) if not family.is_finite else index_set
    logger.debug(
        f"Solved extremal problem for {family.describe()}: n={problem.n}, r={problem.r:.6g}, "
        f"C={cutoff:.10g}, N(C)={members.size}, bracket=[{low:.6g}, {high:.6g}]"
    )
    return _build_solution(problem, cutoff, members, active=True)


def test_weights(solution: ExtremalSolution):
    """
    Normalized kernel weights w_l = (1 - (c_l/C)^2)_+ / w_n

    w_n^2 = 1/2 sum (1 - (c_l/C)^2)_+^2, so 1/2 sum w_l^2 = 1.

    Raises:
        DomainError: if every clamp vanishes
    """
    clamp = solution.clamp()
    norm_sq = 0.5 * math.fsum(clamp * clamp)
    if norm_sq <= 0:
        raise DomainError("Degenerate extremal solution: every weight is zero")
    return IndexWeights(solution.index_set.indices, clamp / math.sqrt(norm_sq))


def balance_constant(family, n, max_indices=None):
    """
    C_n = inf {C > 0 : C^4 N(C) >= n^2}

    N(C) is constant on (l_j, l_{j+1}] between consecutive coefficient
    levels, so the infimum is either a level or (n^2 / N)^(1/4).
    """
    if int(n) != n or n < 2:
        raise DomainError(f"Sample size must be an integer n >= 2, got {n}")
    required = float(n) ** 2

    high = 1.0
    for _ in range(_MAX_DOUBLINGS):
        index_set = enumerate_below(family, high, max_indices)
        if high ** 4 * index_set.size >= required:
            break
        if family.is_finite and index_set.size == len(family.coefficients):
            return (required / index_set.size) ** 0.25
        high *= 2.0

    levels, counts = np.unique(index_set.coefficients, return_counts=True)
    cumulative = np.cumsum(counts)
    for position, level in enumerate(levels):
        candidate = max(float(level), (required / float(cumulative[position])) ** 0.25)
        upper = float(levels[position + 1]) if position + 1 < levels.size else high
        if candidate <= upper:
            logger.debug(f"Balance constant for {family.describe()}, n={n}: C={candidate:.10g}")
            return candidate
    return high


def separation_rate(family, n, max_indices=None):
    """r_n* = 1 / C_n"""
    return 1.0 / balance_constant(family, n, max_indices)


def rate_index_set(family, n, scale=1.0, max_indices=None):
    """N(scale * C_n), the index set of the rate-optimal test"""
    if not scale > 0:
        raise DomainError(f"Cutoff scale must be positive, got {scale}")
    return enumerate_below(family, scale * balance_constant(family, n, max_indices), max_indices)


def u_squared_rate(n, r, N):
    """n^2 r^4 / (2N)"""
    if N < 1:
        raise DomainError(f"Index count must be at least 1, got {N}")
    return float(n) ** 2 * float(r) ** 4 / (2.0 * N)


def _c1(d, sigma):
    p = d / (2.0 * sigma)
    return math.exp(
        d * math.log(math.pi) + math.log(1.0 + 2.0 * sigma / d) + gammaln(1.0 + p)
        - (1.0 + p) * math.log(1.0 + 4.0 * sigma / d) - d * gammaln(1.0 + 1.0 / (2.0 * sigma))
    )


def _c2(d, sigma):
    p = d / (2.0 * sigma)
    return math.exp(
        d * math.log(math.pi) + math.log(1.0 + 2.0 * sigma / d) + gammaln(1.0 + d / 2.0)
        - (1.0 + p) * math.log(1.0 + 4.0 * sigma / d) - d * gammaln(1.5)
    )


def _tensor_constant(d, sigma):
    b = (2.0 * sigma + 1.0) / (2.0 * sigma)
    return math.exp(
        math.log(2.0 * b) + gammaln(d) + d * math.log(math.pi * sigma) - b * math.log(1.0 + 4.0 * sigma)
    )


def asymptotic_u_squared(family, n, r):
    """
    Leading-order u_n^2 for the families with known constants

    Returns None for Sloan-Wozniakowski families, finite tables, and outside
    r in (0, 1), n >= 3.
    """
    if family.is_finite or not 0 < r < 1 or n < 3:
        return None
    variant = family.variant
    if variant == Variant.SLOAN_WOZNIAKOWSKI:
        return None

    d = family.dimension
    base = float(n) ** 2
    if variant == Variant.SOBOLEV_SUM:
        return _c1(d, family.sigma) * base * r ** (4.0 + d / family.sigma)
    if variant == Variant.SOBOLEV_EUCLID:
        return _c2(d, family.sigma) * base * r ** (4.0 + d / family.sigma)
    if variant == Variant.TENSOR_SOBOLEV:
        return _tensor_constant(d, family.sigma) * base * r ** (4.0 + 1.0 / family.sigma) / math.log(1.0 / r) ** (d - 1)
    if variant in (Variant.ANOVA_EXACT, Variant.ANOVA_AT_MOST):
        m = family.m
        if m == 0:
            return base * r ** 4 / 2.0
        value = _tensor_constant(m, family.sigma) * base * r ** (4.0 + 1.0 / family.sigma)
        return value / (math.comb(d, m) * math.log(1.0 / r) ** (m - 1))

    kappa = family.kappa
    return (math.pi * kappa) ** d * math.gamma(d + 1) * base * r ** 4 / (2.0 * math.log(n) ** d)


def cutoff_scaling_probe(family, n, r, scales, max_indices=None):
    """Ratios u^2(1, B) / u^2(1, 1) over a grid of radius scales B"""
    reference = solve_extremal(ExtremalProblem(family, n, r), max_indices).u_squared
    return [
        solve_extremal(ExtremalProblem(family, n, r, B=scale), max_indices).u_squared / reference
        for scale in scales
    ]


def calibrate_radius(family, n, u_target, b=1.0, B=1.0, max_indices=None):
    """
    Radius r with solved u_n(b, B) equal to u_target

    u_n grows with r and saturates as b/(B r) approaches min c_l.
    """
    if not u_target > 0:
        raise DomainError(f"Target u must be positive, got {u_target}")
    c_min = smallest_coefficient(family, max_indices)
    ceiling = b / (B * c_min) * (1.0 - 1e-9)

    def excess(log_r):
        problem = ExtremalProblem(family, n, math.exp(log_r), b, B)
        return solve_extremal(problem, max_indices).u - u_target

    high = math.log(ceiling)
    if excess(high) <= 0:
        raise DomainError(f"u = {u_target} is not attainable for {family.describe()} with n={n}")
    low = high - math.log(2.0)
    for _ in range(_MAX_DOUBLINGS):
        if excess(low) < 0:
            break
        low -= math.log(2.0)
    radius = math.exp(brentq(excess, low, high, xtol=1e-12, rtol=1e-10))
    logger.info(f"Calibrated r={radius:.6g} for u={u_target} ({family.describe()}, n={n})")
    return radius
