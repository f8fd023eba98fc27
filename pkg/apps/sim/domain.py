"""
Domain types for Monte Carlo experiments
"""

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np
import scipy.stats
from django.db import models

from apps.core.exceptions import DomainError
from apps.extremal.domain import ExtremalSolution
from apps.families.domain import IndexWeights


class DesignKind(models.TextChoices):
    UNIFORM = 'uniform', 'Uniform'
    PRODUCT_CDF = 'product-cdf', 'ProductCDF'


class SourceKind(models.TextChoices):
    NULL = 'null', 'Null'
    FIXED = 'fixed', 'FixedCoefficients'
    DETERMINISTIC = 'deterministic', 'LeastFavorableDeterministic'
    PRIOR = 'prior', 'GaussianPrior'


class SignRule(models.TextChoices):
    POSITIVE = 'positive', 'All positive'
    RADEMACHER = 'rademacher', 'Rademacher'


TABLE = 'table'


@dataclass(frozen=True)
class CoordinateCDF:
    """
    A monotone CDF on one design coordinate

    Either a named continuous scipy.stats distribution with its parameters,
    or a piecewise-linear table through (knots, levels).
    """

    distribution: str = 'uniform'
    params: Tuple[Tuple[str, float], ...] = ()
    knots: Optional[np.ndarray] = field(default=None, compare=False)
    levels: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if self.distribution == TABLE:
            if self.knots is None or self.levels is None:
                raise DomainError("A CDF table needs knots and levels")
            knots = np.asarray(self.knots, dtype=float).reshape(-1)
            levels = np.asarray(self.levels, dtype=float).reshape(-1)
            if knots.size < 2 or knots.size != levels.size:
                raise DomainError("A CDF table needs at least two (knot, level) pairs of equal length")
            if np.any(np.diff(knots) <= 0):
                raise DomainError("CDF knots must be strictly increasing")
            if np.any(np.diff(levels) < 0):
                raise DomainError("CDF levels must be nondecreasing")
            if levels[0] != 0.0 or levels[-1] != 1.0:
                raise DomainError("CDF levels must run from 0 to 1")
            for name, array in (('knots', knots), ('levels', levels)):
                array.setflags(write=False)
                object.__setattr__(self, name, array)
        else:
            candidate = getattr(scipy.stats, self.distribution, None)
            if not isinstance(candidate, scipy.stats.rv_continuous):
                raise DomainError(f"Unknown continuous distribution: {self.distribution}")
            object.__setattr__(self, 'params', tuple(sorted((str(k), float(v)) for k, v in self.params)))
            try:
                self.frozen()
            except TypeError as exc:
                raise DomainError(f"Invalid parameters for {self.distribution}: {exc}")

    @classmethod
    def named(cls, distribution, **params):
        return cls(distribution=distribution, params=tuple(params.items()))

    @classmethod
    def table(cls, knots, levels):
        return cls(distribution=TABLE, knots=knots, levels=levels)

    @property
    def is_table(self):
        return self.distribution == TABLE

    def frozen(self):
        return getattr(scipy.stats, self.distribution)(**dict(self.params))

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        if self.is_table:
            return np.interp(y, self.knots, self.levels)
        return np.clip(self.frozen().cdf(y), 0.0, 1.0)

    def ppf(self, u):
        """Quantile function; for tables, exact only where the levels increase strictly"""
        u = np.asarray(u, dtype=float)
        if self.is_table:
            return np.interp(u, self.levels, self.knots)
        return self.frozen().ppf(u)

    def describe(self):
        if self.is_table:
            return f"table({self.knots.size} knots)"
        arguments = ', '.join(f"{k}={v:g}" for k, v in self.params)
        return f"{self.distribution}({arguments})"


@dataclass(frozen=True)
class DesignModel:
    """Distribution of the design points: uniform, or a product of coordinate CDFs"""

    kind: DesignKind = DesignKind.UNIFORM
    cdfs: Tuple[CoordinateCDF, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'kind', DesignKind(self.kind))
        object.__setattr__(self, 'cdfs', tuple(self.cdfs))
        if self.kind == DesignKind.PRODUCT_CDF and not self.cdfs:
            raise DomainError("A product design needs at least one coordinate CDF")
        if self.kind == DesignKind.UNIFORM and self.cdfs:
            raise DomainError("A uniform design takes no coordinate CDFs")

    @classmethod
    def uniform(cls):
        return cls()

    @classmethod
    def product(cls, *cdfs):
        return cls(DesignKind.PRODUCT_CDF, cdfs)

    def coordinate_cdfs(self, d):
        """One CDF per coordinate; a single CDF is shared by all coordinates"""
        if self.kind == DesignKind.UNIFORM:
            return (CoordinateCDF(),) * d
        if len(self.cdfs) == 1:
            return self.cdfs * d
        if len(self.cdfs) != d:
            raise DomainError(f"Design has {len(self.cdfs)} coordinate CDFs but d={d}")
        return self.cdfs


@dataclass(frozen=True)
class AlternativeSource:
    """Where the regression function of each replication comes from"""

    kind: SourceKind = SourceKind.NULL
    theta: Optional[IndexWeights] = None
    solution: Optional[ExtremalSolution] = None
    sign_rule: SignRule = SignRule.POSITIVE

    def __post_init__(self):
        object.__setattr__(self, 'kind', SourceKind(self.kind))
        object.__setattr__(self, 'sign_rule', SignRule(self.sign_rule))
        if self.kind == SourceKind.FIXED:
            if self.theta is None:
                raise DomainError("Fixed alternatives need a coefficient map")
            if not np.all(np.isfinite(self.theta.values)):
                raise DomainError("Fixed coefficients must be finite")
        if self.kind in (SourceKind.DETERMINISTIC, SourceKind.PRIOR) and self.solution is None:
            raise DomainError(f"{self.kind.label} alternatives need an extremal solution")
        if self.kind == SourceKind.PRIOR:
            problem = self.solution.problem
            if not (problem.b < 1.0 < problem.B and math.isclose(problem.b + problem.B, 2.0)):
                raise DomainError(
                    f"A Gaussian prior needs (b, B) = (1 - delta, 1 + delta), got ({problem.b}, {problem.B})"
                )

    @classmethod
    def null(cls):
        return cls()

    @classmethod
    def fixed(cls, theta):
        if not isinstance(theta, IndexWeights):
            theta = IndexWeights.from_mapping(theta)
        return cls(SourceKind.FIXED, theta=theta)

    @property
    def delta(self):
        return self.solution.problem.B - 1.0 if self.kind == SourceKind.PRIOR else None

    @property
    def is_random(self):
        return self.kind == SourceKind.PRIOR or (
            self.kind == SourceKind.DETERMINISTIC and self.sign_rule == SignRule.RADEMACHER
        )

    @property
    def mode(self):
        """Label used in report rows"""
        if self.kind == SourceKind.DETERMINISTIC and self.sign_rule == SignRule.RADEMACHER:
            return SignRule.RADEMACHER.value
        return self.kind.value

    @property
    def dimension(self):
        if self.solution is not None:
            return self.solution.index_set.dimension
        if self.theta is not None:
            return self.theta.dimension
        return 0


@dataclass(frozen=True)
class MonteCarloReport:
    """Aggregated outcome of a Monte Carlo run"""

    replications: int
    rejections: int
    empirical_rate: float
    wilson_ci: Tuple[float, float]
    seed: int
    runtime: float
    predicted: Optional[float] = None
    u_n: Optional[float] = None
    mode: str = SourceKind.NULL.value
    n: Optional[int] = None
    threshold: Optional[float] = None
    index_count: Optional[int] = None
    cutoff: Optional[float] = None
    radius: Optional[float] = None
    family: Optional[object] = None
    mean_statistic: Optional[float] = None

    def __post_init__(self):
        if not 0 <= self.rejections <= self.replications:
            raise DomainError(
                f"Rejections ({self.rejections}) must lie between 0 and replications ({self.replications})"
            )
        lo, hi = self.wilson_ci
        if not 0.0 <= lo <= self.empirical_rate <= hi <= 1.0:
            raise DomainError(f"Interval ({lo}, {hi}) does not contain the rate {self.empirical_rate}")

    def without_runtime(self):
        return replace(self, runtime=0.0)
