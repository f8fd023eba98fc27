"""
Services for the families app
Coefficient evaluation, exact enumeration of N(C) and closed-form counts
"""

import logging
import math

import numpy as np
from django.conf import settings
from scipy.special import gammaln

from apps.core.exceptions import DomainError, ResourceLimitError
from .domain import (
    ANOVA_VARIANTS,
    PRODUCT_VARIANTS,
    SOBOLEV_VARIANTS,
    IndexSet,
    Variant,
    as_multi_index,
)

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi

# Pruning tolerates this relative excess; the final filter is exact.
_PRUNE_SLACK = 1e-12
_CHUNK_ROWS = 1 << 21


def resolve_cap(max_indices=None):
    """Enumeration cap: explicit argument or MINIMAXGOF_MAX_INDICES"""
    if max_indices is None:
        return int(settings.MINIMAXGOF_MAX_INDICES)
    return int(max_indices)


def _as_rows(indices):
    rows = np.asarray(indices, dtype=np.int64)
    if rows.ndim == 1:
        rows = rows.reshape(1, -1)
    return rows


def raw_coefficients(family, indices):
    """
    c_l for every row of an index array, without lattice checks

    Columns beyond the stored width are zero. The zero index gets the value
    of the formula (0 for the Sobolev families, 1 for the product families).
    """
    rows = _as_rows(indices)

    if family.is_finite:
        table = np.asarray(family.coefficients)
        first = rows[:, 0] if rows.shape[1] else np.zeros(rows.shape[0], dtype=np.int64)
        inside = (first >= 0) & (first < table.size)
        if rows.shape[1] > 1:
            inside &= ~(rows[:, 1:] != 0).any(axis=1)
        values = np.full(rows.shape[0], np.inf)
        values[inside] = table[first[inside]]
        return values

    variant = family.variant
    scaled = np.abs(TWO_PI * rows)
    with np.errstate(over='ignore'):
        if variant == Variant.SOBOLEV_SUM:
            return np.sqrt(np.sum(scaled ** (2.0 * family.sigma), axis=1))
        if variant == Variant.SOBOLEV_EUCLID:
            return np.sum(scaled ** 2, axis=1) ** (family.sigma / 2.0)
        if variant in PRODUCT_VARIANTS:
            factors = np.where(rows != 0, scaled ** family.sigma, 1.0)
            return np.prod(factors, axis=1)
        if variant == Variant.ANALYTIC_STRIP:
            return np.sqrt(np.prod(np.cosh(family.kappa * scaled), axis=1))

        positions = np.arange(1, rows.shape[1] + 1, dtype=float)
        factors = np.where(rows != 0, positions ** family.s * scaled ** family.sigma, 1.0)
        return np.prod(factors, axis=1)


def lattice_mask(family, indices):
    """Boolean mask of rows lying in the family's index lattice"""
    rows = _as_rows(indices)
    nonzero = rows != 0

    if family.is_finite:
        return np.isfinite(raw_coefficients(family, rows))

    mask = np.ones(rows.shape[0], dtype=bool)
    if family.dimension is not None and rows.shape[1] > family.dimension:
        mask &= ~nonzero[:, family.dimension:].any(axis=1)

    support = nonzero.sum(axis=1)
    if family.variant in SOBOLEV_VARIANTS:
        mask &= support > 0
    elif family.variant == Variant.ANOVA_EXACT:
        mask &= support == family.m
    elif family.variant == Variant.ANOVA_AT_MOST:
        mask &= support <= family.m
    return mask


def coefficient(family, l):
    """
    Coefficient c_l of a single multi-index

    Args:
        family: CoefficientFamily or FiniteFamily
        l: MultiIndex or a sequence of integers

    Returns:
        float: c_l

    Raises:
        DomainError: if l is outside the family's lattice
    """
    index = as_multi_index(l)

    if family.is_finite:
        if len(index) > 1 or not 0 <= (index.entries[0] if len(index) else 0) < len(family.coefficients):
            raise DomainError(
                f"Index {index} is outside the finite table of {len(family.coefficients)} coefficients"
            )
    else:
        if family.dimension is not None and len(index) > family.dimension:
            raise DomainError(
                f"Index {index} has nonzero entries beyond dimension d={family.dimension}"
            )
        if family.variant in SOBOLEV_VARIANTS and index.support_size == 0:
            raise DomainError(f"{family.variant.label} lattice excludes the zero index")
        if family.variant == Variant.ANOVA_EXACT and index.support_size != family.m:
            raise DomainError(
                f"AnovaExact lattice requires exactly m={family.m} nonzero entries, got {index.support_size}"
            )
        if family.variant == Variant.ANOVA_AT_MOST and index.support_size > family.m:
            raise DomainError(
                f"AnovaAtMost lattice requires at most m={family.m} nonzero entries, got {index.support_size}"
            )

    row = np.array([index.entries], dtype=np.int64).reshape(1, len(index))
    return float(raw_coefficients(family, row)[0])


def _axis_coefficient(family, axis, value):
    row = np.zeros((1, axis + 1), dtype=np.int64)
    row[0, axis] = value
    return float(raw_coefficients(family, row)[0])


def coordinate_bound(family, axis, limit, cap):
    """
    Largest b with the single-coordinate coefficient at l_axis = b below limit

    Returns -1 when even the zero index reaches the limit.
    """
    if _axis_coefficient(family, axis, 0) >= limit:
        return -1

    high = 1
    while _axis_coefficient(family, axis, high) < limit:
        if high > cap:
            raise ResourceLimitError(
                f"N({limit:g}) exceeds the enumeration cap of {cap} indices: "
                f"coordinate {axis + 1} alone admits more than {cap} values", cap=cap
            )
        high *= 2

    low = high // 2
    while high - low > 1:
        middle = (low + high) // 2
        if _axis_coefficient(family, axis, middle) < limit:
            low = middle
        else:
            high = middle
    return low


def sw_active_dimension(family, cutoff):
    """Number of coordinates j with j^s (2 pi)^sigma < C"""
    base = TWO_PI ** family.sigma
    if base >= cutoff:
        return 0

    estimate = (cutoff / base) ** (1.0 / family.s)
    if estimate > 2 ** 62:
        raise ResourceLimitError(f"Active dimension at C={cutoff:g} is unbounded in practice")
    active = int(math.floor(estimate))
    while (active + 1) ** family.s * base < cutoff:
        active += 1
    while active > 0 and active ** family.s * base >= cutoff:
        active -= 1
    return active


def _expand(counts):
    """Parent position and local offset for each of sum(counts) children"""
    counts = np.asarray(counts, dtype=np.int64)
    parent = np.repeat(np.arange(counts.size), counts)
    starts = np.cumsum(counts) - counts
    offset = np.arange(parent.size, dtype=np.int64) - starts[parent]
    return parent, offset


def _enumerate_box(family, cutoff, dimension, cap):
    """Level-wise scan over coordinates with pruning on partial coefficients"""
    limit = cutoff * (1.0 + _PRUNE_SLACK)
    bounds = [coordinate_bound(family, axis, limit, cap) for axis in range(dimension)]
    if bounds[0] < 0:
        return np.zeros((0, dimension), dtype=np.int64)

    prefixes = np.zeros((1, 0), dtype=np.int64)
    for axis, bound in enumerate(bounds):
        values = np.arange(-bound, bound + 1, dtype=np.int64)
        step = max(1, _CHUNK_ROWS // values.size)
        kept = []
        total = 0
        for start in range(0, prefixes.shape[0], step):
            block = prefixes[start:start + step]
            candidates = np.empty((block.shape[0] * values.size, axis + 1), dtype=np.int64)
            candidates[:, :axis] = np.repeat(block, values.size, axis=0)
            candidates[:, axis] = np.tile(values, block.shape[0])
            survivors = candidates[raw_coefficients(family, candidates) < limit]
            total += survivors.shape[0]
            if total > cap:
                raise ResourceLimitError(
                    f"N({cutoff:g}) exceeds the enumeration cap of {cap} indices "
                    f"(candidates counted before the lattice constraint)", cap=cap
                )
            kept.append(survivors)
        prefixes = np.concatenate(kept) if kept else np.zeros((0, axis + 1), dtype=np.int64)
        logger.debug(f"Coordinate {axis + 1}/{dimension}: bound {bound}, {prefixes.shape[0]} prefixes")
    return prefixes


def _enumerate_weighted_product(family, cutoff, cap):
    """
    Sparse scan of the Sloan-Wozniakowski lattice

    Nodes are grown by appending a nonzero entry at a coordinate beyond the
    last nonzero one, so each index is produced once from its support.
    """
    limit = cutoff * (1.0 + _PRUNE_SLACK)
    if limit <= 1.0:
        return np.zeros((0, 0), dtype=np.int64)

    active = sw_active_dimension(family, limit)
    if 2 * active > cap:
        raise ResourceLimitError(
            f"N({cutoff:g}) exceeds the enumeration cap of {cap} indices", cap=cap
        )

    sigma, s = family.sigma, family.s
    base = TWO_PI ** sigma
    coords = np.zeros((1, 0), dtype=np.int64)
    values = np.zeros((1, 0), dtype=np.int64)
    products = np.ones(1)
    last = np.zeros(1, dtype=np.int64)
    levels = [(coords, values)]
    total = 1

    while products.size:
        reach = np.minimum((limit / (products * base)) ** (1.0 / s), float(active))
        counts = np.clip(np.floor(reach).astype(np.int64) + 1, None, active) - last
        counts = np.clip(counts, 0, None)
        if counts.sum() > 4 * cap:
            raise ResourceLimitError(
                f"N({cutoff:g}) exceeds the enumeration cap of {cap} indices", cap=cap
            )
        parent, offset = _expand(counts)
        position = last[parent] + 1 + offset
        position_factor = position.astype(float) ** s

        span = (limit / (products[parent] * position_factor)) ** (1.0 / sigma) / TWO_PI
        magnitudes = np.floor(np.minimum(span, float(cap))).astype(np.int64) + 1
        pair, step = _expand(magnitudes)
        magnitude = step + 1
        owner = parent[pair]
        child_products = products[owner] * (position_factor[pair] * (TWO_PI * magnitude) ** sigma)
        keep = child_products < limit
        owner, magnitude, child_products = owner[keep], magnitude[keep], child_products[keep]
        child_positions = position[pair][keep]

        count = 2 * owner.size
        total += count
        if total > cap:
            raise ResourceLimitError(
                f"N({cutoff:g}) exceeds the enumeration cap of {cap} indices", cap=cap
            )

        coords = np.column_stack([np.repeat(coords[owner], 2, axis=0), np.repeat(child_positions, 2)])
        signs = np.tile(np.array([1, -1], dtype=np.int64), owner.size)
        values = np.column_stack([np.repeat(values[owner], 2, axis=0), np.repeat(magnitude, 2) * signs])
        products = np.repeat(child_products, 2)
        last = np.repeat(child_positions, 2)
        if products.size:
            levels.append((coords, values))

    width = max((int(level_coords.max()) for level_coords, _ in levels if level_coords.size), default=0)
    dense = np.zeros((total, width), dtype=np.int64)
    row = 0
    for level_coords, level_values in levels:
        rows = np.arange(row, row + level_coords.shape[0])
        for column in range(level_coords.shape[1]):
            dense[rows, level_coords[:, column] - 1] = level_values[:, column]
        row += level_coords.shape[0]
    logger.debug(f"Weighted product scan: {active} active coordinates, {len(levels)} support levels")
    return dense


def _sorted_index_set(cutoff, indices, coefficients, label):
    keys = [indices[:, column] for column in reversed(range(indices.shape[1]))]
    order = np.lexsort(keys + [coefficients])
    return IndexSet(cutoff, indices[order], coefficients[order], label)


def enumerate_below(family, cutoff, max_indices=None):
    """
    Exact enumeration of N(C) = {l in lattice : c_l < C}

    Args:
        family: CoefficientFamily or FiniteFamily
        cutoff: C > 0
        max_indices: cap on N(C), defaults to MINIMAXGOF_MAX_INDICES

    Returns:
        IndexSet ordered by coefficient, then lexicographically by index

    Raises:
        DomainError: if C is not positive
        ResourceLimitError: if N(C) would exceed the cap
    """
    if not cutoff > 0:
        raise DomainError(f"Cutoff must be positive, got {cutoff}")
    cap = resolve_cap(max_indices)
    label = family.describe()

    if family.is_finite:
        table = np.asarray(family.coefficients)
        positions = np.flatnonzero(table < cutoff)
        if positions.size > cap:
            raise ResourceLimitError(
                f"N({cutoff:g}) exceeds the enumeration cap of {cap} indices", cap=cap
            )
        return _sorted_index_set(cutoff, positions.reshape(-1, 1).astype(np.int64), table[positions], label)

    if family.variant == Variant.SLOAN_WOZNIAKOWSKI:
        candidates = _enumerate_weighted_product(family, cutoff, cap)
    else:
        candidates = _enumerate_box(family, cutoff, family.dimension, cap)

    coefficients = raw_coefficients(family, candidates) if candidates.shape[0] else np.zeros(0)
    mask = (coefficients < cutoff) & lattice_mask(family, candidates)
    indices, coefficients = candidates[mask], coefficients[mask]
    if indices.shape[0] > cap:
        raise ResourceLimitError(f"N({cutoff:g}) exceeds the enumeration cap of {cap} indices", cap=cap)

    logger.debug(f"Enumerated N({cutoff:g}) = {indices.shape[0]} for {label}")
    return _sorted_index_set(cutoff, indices, coefficients, label)


def _log_j1(d, sigma):
    return d * gammaln(1.0 + 1.0 / (2.0 * sigma)) - d * math.log(math.pi) - gammaln(1.0 + d / (2.0 * sigma))


def _log_j2(d):
    return -d * math.log(2.0) - (d / 2.0) * math.log(math.pi) - gammaln(1.0 + d / 2.0)


def _tensor_count(C, dims, sigma):
    if dims == 0:
        return 1.0
    log_c = math.log(C)
    if dims > 1 and log_c <= 0:
        return None
    log_factor = (dims - 1) * math.log(log_c) if dims > 1 else 0.0
    return math.exp(
        math.log(C) / sigma + log_factor
        - dims * math.log(math.pi) - (dims - 1) * math.log(sigma) - gammaln(dims)
    )


def asymptotic_count(family, cutoff):
    """
    Leading-order approximation of N(C), or None where no constant is known

    Sloan-Wozniakowski families and finite tables have no closed form;
    log-involving formulas return None for C <= 1.
    """
    if family.is_finite or not cutoff > 0:
        return None

    variant = family.variant
    if variant == Variant.SLOAN_WOZNIAKOWSKI:
        return None

    d = family.dimension
    if variant == Variant.SOBOLEV_SUM:
        return math.exp(d / family.sigma * math.log(cutoff) + _log_j1(d, family.sigma))
    if variant == Variant.SOBOLEV_EUCLID:
        return math.exp(d / family.sigma * math.log(cutoff) + _log_j2(d))
    if variant == Variant.TENSOR_SOBOLEV:
        return _tensor_count(cutoff, d, family.sigma)
    if variant in ANOVA_VARIANTS:
        count = _tensor_count(cutoff, family.m, family.sigma)
        return None if count is None else math.comb(d, family.m) * count

    if cutoff <= 1:
        return None
    return math.exp(
        d * math.log(2.0) + d * math.log(math.log(cutoff))
        - d * math.log(math.pi * family.kappa) - gammaln(d + 1.0)
    )


def embedding_condition_holds(family):
    """
    Sufficient smoothness for a bounded ellipsoid of functions

    sigma > d/4 for the Sobolev balls, sigma > 1/4 for tensor and ANOVA,
    min(sigma, s) > 1/2 for Sloan-Wozniakowski; the strip always qualifies.
    """
    if family.is_finite:
        return True
    variant = family.variant
    if variant in SOBOLEV_VARIANTS:
        return family.sigma > family.dimension / 4.0
    if variant in PRODUCT_VARIANTS:
        return family.sigma > 0.25
    if variant == Variant.SLOAN_WOZNIAKOWSKI:
        return family.sigma_star > 0.5
    return True
