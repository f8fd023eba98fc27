"""
Services for the basis app
Tensor-product Fourier, Haar and Walsh systems on [0, 1]^d
"""

import logging
import math

import numpy as np

from apps.core.exceptions import DomainError
from apps.families.domain import IndexSet, as_multi_index
from .domain import BasisKind, as_points

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
# Largest double below 1; t = 1 evaluates as the left limit.
_LAST_BELOW_ONE = np.nextafter(1.0, 0.0)


def fourier_1d(j, u):
    """phi_0 = 1, sqrt(2) cos(2 pi j u) for j > 0, sqrt(2) sin(2 pi |j| u) for j < 0"""
    j = np.asarray(j, dtype=np.int64)
    u = np.mod(np.asarray(u, dtype=float), 1.0)
    angle = 2.0 * np.pi * np.abs(j) * u
    return np.where(j > 0, SQRT2 * np.cos(angle), np.where(j < 0, SQRT2 * np.sin(angle), 1.0))


def _below_one(u):
    return np.minimum(np.asarray(u, dtype=float), _LAST_BELOW_ONE)


def haar_code(level, shift):
    """Code m = 2^j + k - 1 of the Haar function at level j and shift k in 1..2^j"""
    if level < 0 or not 1 <= shift <= 2 ** level:
        raise DomainError(f"Haar shift must lie in 1..2^j, got j={level}, k={shift}")
    return 2 ** level + shift - 1


def haar_level_shift(code):
    """Inverse of haar_code for m >= 1"""
    if code < 1:
        raise DomainError(f"Haar code {code} has no level; 0 is the constant function")
    level = int(code).bit_length() - 1
    return level, int(code) - 2 ** level + 1


def haar_1d(m, u):
    """
    Haar system by code: m = 0 is the constant, m = 2^j + k - 1 is
    2^(j/2) h(2^j u - k + 1) with h = +1 on [0, 1/2), -1 on [1/2, 1)
    """
    m = np.asarray(m, dtype=np.int64)
    u = _below_one(u)
    safe = np.maximum(m, 1)
    level = np.floor(np.log2(safe.astype(float))).astype(np.int64)
    # float log2 can be off by one at exact powers of two
    level = np.where((np.int64(1) << (level + 1)) <= safe, level + 1, level)
    level = np.where((np.int64(1) << level) > safe, level - 1, level)
    shift = safe - (np.int64(1) << level) + 1
    scale = np.exp2(level.astype(float))
    local = scale * u - shift + 1.0
    mother = np.where((local >= 0.0) & (local < 0.5), 1.0, np.where((local >= 0.5) & (local < 1.0), -1.0, 0.0))
    return np.where(m == 0, 1.0, np.sqrt(scale) * mother)


def walsh_1d(m, u):
    """Paley-ordered Walsh functions: bit i of m selects the Rademacher function r_(i+1)"""
    m = np.asarray(m, dtype=np.int64)
    u = _below_one(u)
    m, u = np.broadcast_arrays(m, u)
    value = np.ones(m.shape)
    bit = 0
    remaining = m.copy()
    while np.any(remaining):
        digit = np.floor(u * 2.0 ** (bit + 1)).astype(np.int64) & 1
        value = np.where((remaining & 1) & digit, -value, value)
        remaining = remaining >> 1
        bit += 1
    return value


def signed_to_code(l):
    """Zigzag map of signed lattice entries to nonnegative codes: 0, 1, -1, 2, -2 -> 0, 1, 2, 3, 4"""
    l = np.asarray(l, dtype=np.int64)
    return np.where(l > 0, 2 * l - 1, -2 * l)


_ONE_DIMENSIONAL = {
    BasisKind.FOURIER: fourier_1d,
    BasisKind.HAAR: haar_1d,
    BasisKind.WALSH: walsh_1d,
}


def _basis(basis):
    try:
        return BasisKind(basis)
    except ValueError:
        raise DomainError(f"Unknown basis '{basis}'; choose from {', '.join(BasisKind.values)}")


def _index_rows(indices):
    if isinstance(indices, IndexSet):
        return indices.indices
    rows = np.asarray(indices, dtype=np.int64)
    if rows.ndim == 1:
        rows = rows.reshape(-1, 1)
    return rows


def _tensor_eval(one_dimensional, entries, t):
    entries = tuple(entries)
    coordinates = np.asarray(t, dtype=float)
    if len(entries) > coordinates.size:
        raise DomainError(f"Index {entries} has nonzero entries beyond dimension {coordinates.size}")
    return float(np.prod([one_dimensional(j, u) for j, u in zip(entries, coordinates)]))


def fourier_eval(l, t):
    """prod_k phi_(l_k)(t_k) for the tensor Fourier basis"""
    return _tensor_eval(fourier_1d, as_multi_index(l).entries, as_points(t)[0])


def haar_eval(codes, t):
    """Tensor Haar function; each code is 0 or 2^j + k - 1"""
    codes = tuple(int(c) for c in np.atleast_1d(codes))
    if any(c < 0 for c in codes):
        raise DomainError(f"Haar codes must be nonnegative, got {codes}")
    return _tensor_eval(haar_1d, codes, as_points(t)[0])


def walsh_eval(j, t):
    """Tensor Walsh function of a nonnegative index vector"""
    codes = tuple(int(c) for c in np.atleast_1d(j))
    if any(c < 0 for c in codes):
        raise DomainError(f"Walsh indices must be nonnegative, got {codes}")
    return _tensor_eval(walsh_1d, codes, as_points(t)[0])


def design_block(basis, indices, points):
    """
    Basis values as an (N, n) array: row l holds phi_l at every design point

    Indices are signed lattice rows; Haar and Walsh map each entry through
    signed_to_code.
    """
    kind = _basis(basis)
    rows = _index_rows(indices)
    points = as_points(points)
    if rows.shape[1] > points.shape[1] and np.any(rows[:, points.shape[1]:]):
        raise DomainError(
            f"Indices use {rows.shape[1]} coordinates but design points have d={points.shape[1]}"
        )

    one_dimensional = _ONE_DIMENSIONAL[kind]
    block = np.ones((rows.shape[0], points.shape[0]))
    for axis in range(min(rows.shape[1], points.shape[1])):
        column = rows[:, axis]
        if not np.any(column):
            continue
        if kind != BasisKind.FOURIER:
            column = signed_to_code(column)
        distinct, inverse = np.unique(column, return_inverse=True)
        table = one_dimensional(distinct[:, None], points[None, :, axis])
        block *= table[inverse.reshape(-1)]
    return block


def evaluate(basis, indices, points):
    """(n, N) matrix of phi_l(t_i)"""
    return design_block(basis, indices, points).T


def gram_identity_check(members, t, basis=BasisKind.FOURIER):
    """
    sum over members of phi_l(t)^2 and its deviation from N

    The deviation vanishes for sign-symmetric Fourier sets.
    """
    rows = _index_rows(members)
    if rows.shape[0] == 0:
        return 0.0, 0.0
    values = design_block(basis, rows, t)[:, 0]
    total = math.fsum(values * values)
    return total, total - rows.shape[0]
