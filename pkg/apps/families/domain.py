"""
Domain types for ellipsoid coefficient families

A family describes the coefficients c_l of the ellipsoid
{sum c_l^2 theta_l^2 <= 1}; an IndexSet is the finite set of multi-indices
with c_l below a cutoff.
"""

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Sequence, Tuple

import numpy as np
from django.db import models

from apps.core.exceptions import DomainError


class Variant(models.TextChoices):
    """Coefficient families; values double as CLI/JSON names"""

    SOBOLEV_SUM = 'sobolev-sum', 'SobolevSum'
    SOBOLEV_EUCLID = 'sobolev-euclid', 'SobolevEuclid'
    TENSOR_SOBOLEV = 'tensor-sobolev', 'TensorSobolev'
    ANOVA_EXACT = 'anova-exact', 'AnovaExact'
    ANOVA_AT_MOST = 'anova-at-most', 'AnovaAtMost'
    ANALYTIC_STRIP = 'analytic-strip', 'AnalyticStrip'
    SLOAN_WOZNIAKOWSKI = 'sloan-wozniakowski', 'SloanWozniakowski'

    @classmethod
    def parse(cls, name):
        """Accept either the CLI slug or the CamelCase label"""
        for variant in cls:
            if name in (variant.value, variant.label):
                return variant
        raise DomainError(f"Unknown family variant '{name}'")


SOBOLEV_VARIANTS = (Variant.SOBOLEV_SUM, Variant.SOBOLEV_EUCLID)
PRODUCT_VARIANTS = (Variant.TENSOR_SOBOLEV, Variant.ANOVA_EXACT, Variant.ANOVA_AT_MOST)
ANOVA_VARIANTS = (Variant.ANOVA_EXACT, Variant.ANOVA_AT_MOST)


def _canonical(entries):
    entries = tuple(int(e) for e in entries)
    end = len(entries)
    while end and entries[end - 1] == 0:
        end -= 1
    return entries[:end]


@dataclass(frozen=True)
class MultiIndex:
    """Multi-index in Z^infinity_* stored without trailing zeros"""

    entries: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'entries', _canonical(self.entries))

    @classmethod
    def of(cls, *entries):
        return cls(tuple(entries))

    @property
    def support_size(self):
        """Number of nonzero entries"""
        return sum(1 for e in self.entries if e != 0)

    def padded(self, dimension):
        if len(self.entries) > dimension:
            raise DomainError(
                f"Index {self.entries} has nonzero entries beyond dimension {dimension}"
            )
        return self.entries + (0,) * (dimension - len(self.entries))

    def __iter__(self) -> Iterator[int]:
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def __str__(self):
        return ' '.join(str(e) for e in self.entries) or '0'


def as_multi_index(value):
    if isinstance(value, MultiIndex):
        return value
    if isinstance(value, (int, np.integer)):
        return MultiIndex((int(value),))
    return MultiIndex(tuple(value))


@dataclass(frozen=True)
class CoefficientFamily:
    """Parametric description of ellipsoid coefficients c_l"""

    variant: Variant
    d: Optional[int] = None
    sigma: Optional[float] = None
    s: Optional[float] = None
    kappa: Optional[float] = None
    m: Optional[int] = None

    is_finite = False

    def __post_init__(self):
        object.__setattr__(self, 'variant', Variant.parse(self.variant))
        variant = self.variant

        if variant != Variant.SLOAN_WOZNIAKOWSKI:
            if self.d is None or int(self.d) != self.d or self.d < 1:
                raise DomainError(f"{variant.label} requires an integer dimension d >= 1")
            object.__setattr__(self, 'd', int(self.d))
        else:
            object.__setattr__(self, 'd', None)

        if variant == Variant.ANALYTIC_STRIP:
            if self.kappa is None or not self.kappa > 0:
                raise DomainError("AnalyticStrip requires kappa > 0")
        elif self.sigma is None or not self.sigma > 0:
            raise DomainError(f"{variant.label} requires sigma > 0")

        if variant == Variant.SLOAN_WOZNIAKOWSKI and (self.s is None or not self.s > 0):
            raise DomainError("SloanWozniakowski requires s > 0")

        if variant in ANOVA_VARIANTS:
            if self.m is None or int(self.m) != self.m or not 0 <= self.m <= self.d:
                raise DomainError(f"{variant.label} requires an integer 0 <= m <= d")
            object.__setattr__(self, 'm', int(self.m))

    @property
    def dimension(self):
        """Ambient dimension, None for the infinite-dimensional lattice"""
        return self.d

    @property
    def sigma_star(self):
        if self.variant == Variant.SLOAN_WOZNIAKOWSKI:
            return min(self.sigma, self.s)
        return self.sigma

    def describe(self):
        params = ', '.join(
            f"{name}={getattr(self, name)}"
            for name in ('d', 'sigma', 's', 'kappa', 'm')
            if getattr(self, name) is not None
        )
        return f"{self.variant.label}({params})"


@dataclass(frozen=True)
class FiniteFamily:
    """Explicit finite coefficient table; entry j is the index (j,)"""

    coefficients: Tuple[float, ...]
    variant = 'finite'
    is_finite = True

    def __post_init__(self):
        values = tuple(float(c) for c in self.coefficients)
        if not values:
            raise DomainError("A finite family needs at least one coefficient")
        if any(not c > 0 for c in values):
            raise DomainError("Finite family coefficients must be positive")
        object.__setattr__(self, 'coefficients', values)

    @property
    def dimension(self):
        return 1

    def describe(self):
        return f"Finite(K={len(self.coefficients)})"


def _frozen(array, dtype):
    array = np.array(array, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class IndexWeights:
    """A finitely supported map MultiIndex -> real, stored as aligned arrays"""

    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        indices = np.asarray(self.indices, dtype=np.int64)
        if indices.ndim == 1:
            indices = indices.reshape(-1, 1) if indices.size else indices.reshape(0, 0)
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if indices.shape[0] != values.shape[0]:
            raise DomainError("Index and value arrays must have the same length")
        object.__setattr__(self, 'indices', _frozen(indices, np.int64))
        object.__setattr__(self, 'values', _frozen(values, float))

    @classmethod
    def from_mapping(cls, mapping: Mapping):
        keys = [as_multi_index(key) for key in mapping]
        width = max((len(key) for key in keys), default=0)
        indices = np.zeros((len(keys), width), dtype=np.int64)
        for row, key in enumerate(keys):
            indices[row, :len(key)] = key.entries
        return cls(indices, np.array([float(v) for v in mapping.values()]))

    @property
    def size(self):
        return int(self.values.shape[0])

    @property
    def dimension(self):
        return int(self.indices.shape[1])

    def keys(self):
        return [MultiIndex(tuple(row)) for row in self.indices]

    def as_dict(self):
        return dict(zip(self.keys(), self.values.tolist()))

    def aligned_to(self, indices):
        """Values re-ordered onto another index array (0 where absent)"""
        lookup = self.as_dict()
        return np.array([lookup.get(MultiIndex(tuple(row)), 0.0) for row in np.asarray(indices)])

    def __len__(self):
        return self.size


@dataclass(frozen=True)
class IndexSet:
    """The finite set N(C) = {l : c_l < C} with its coefficients"""

    cutoff: float
    indices: np.ndarray
    coefficients: np.ndarray
    family_label: str = field(default='', compare=False)

    def __post_init__(self):
        indices = np.asarray(self.indices, dtype=np.int64)
        if indices.ndim != 2:
            raise DomainError("IndexSet indices must be a 2-d array")
        coefficients = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if indices.shape[0] != coefficients.shape[0]:
            raise DomainError("IndexSet indices and coefficients differ in length")
        object.__setattr__(self, 'indices', _frozen(indices, np.int64))
        object.__setattr__(self, 'coefficients', _frozen(coefficients, float))

    @property
    def size(self):
        """N(C)"""
        return int(self.coefficients.shape[0])

    @property
    def dimension(self):
        return int(self.indices.shape[1])

    @property
    def members(self):
        return [(MultiIndex(tuple(row)), float(c)) for row, c in zip(self.indices, self.coefficients)]

    def keys(self):
        return [MultiIndex(tuple(row)) for row in self.indices]

    def restrict_below(self, cutoff):
        """Members with c_l < cutoff, for cutoff not above this set's cutoff"""
        mask = self.coefficients < cutoff
        return IndexSet(cutoff, self.indices[mask], self.coefficients[mask], self.family_label)

    def __len__(self):
        return self.size


def index_array(keys: Iterable[Sequence[int]]):
    """Stack multi-indices into a zero-padded 2-d array"""
    keys = [as_multi_index(key) for key in keys]
    width = max((len(key) for key in keys), default=0)
    array = np.zeros((len(keys), width), dtype=np.int64)
    for row, key in enumerate(keys):
        array[row, :len(key)] = key.entries
    return array
