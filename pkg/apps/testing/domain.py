"""
Domain types for the U-statistic tests
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from django.db import models

from apps.basis.domain import BasisKind, as_points
from apps.core.exceptions import DomainError
from apps.families.domain import IndexWeights

NORMALIZATION_TOLERANCE = 1e-8


class VarianceMode(models.TextChoices):
    KNOWN = 'known', 'Known'
    PLUGIN = 'plugin', 'PlugIn'


class Criterion(models.TextChoices):
    NEYMAN_PEARSON = 'np', 'Neyman-Pearson'
    TOTAL_ERROR = 'total', 'Total error'


@dataclass(frozen=True)
class Sample:
    """Observations x_i = f(t_i) + noise at design points t_i in [0, 1]^d"""

    points: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        responses = np.asarray(self.responses, dtype=float).reshape(-1)
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        if points.size:
            points = as_points(points)
        if points.shape[0] != responses.size:
            raise DomainError(
                f"Sample has {points.shape[0]} design points but {responses.size} responses"
            )
        if not np.all(np.isfinite(responses)):
            raise DomainError("Responses must be finite")
        for name, array in (('points', points), ('responses', responses)):
            array = np.array(array, copy=True)
            array.setflags(write=False)
            object.__setattr__(self, name, array)

    @property
    def n(self):
        return int(self.responses.size)

    @property
    def dimension(self):
        return int(self.points.shape[1])


@dataclass(frozen=True)
class TestSpec:
    """A fully instantiated test: kernel weights, basis, threshold, variance handling"""

    weights: IndexWeights
    threshold: float
    basis: BasisKind = BasisKind.FOURIER
    variance_mode: VarianceMode = VarianceMode.KNOWN
    tau2: Optional[float] = 1.0
    alpha: Optional[float] = None
    criterion: Criterion = Criterion.NEYMAN_PEARSON

    def __post_init__(self):
        object.__setattr__(self, 'basis', BasisKind(self.basis))
        object.__setattr__(self, 'variance_mode', VarianceMode(self.variance_mode))
        object.__setattr__(self, 'criterion', Criterion(self.criterion))

        values = self.weights.values
        if values.size == 0:
            raise DomainError("A test needs at least one kernel weight")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise DomainError("Kernel weights must be finite and nonnegative")
        half_square = 0.5 * math.fsum(values * values)
        if abs(half_square - 1.0) > NORMALIZATION_TOLERANCE:
            raise DomainError(f"Kernel weights must satisfy 1/2 sum w^2 = 1, got {half_square:.12g}")

        if self.variance_mode == VarianceMode.KNOWN:
            if self.tau2 is None or not self.tau2 > 0:
                raise DomainError("Known variance requires tau^2 > 0")
        if self.alpha is not None and not 0 < self.alpha < 1:
            raise DomainError(f"Level alpha must lie in (0, 1), got {self.alpha}")

    @property
    def size(self):
        return self.weights.size


@dataclass(frozen=True)
class TestOutcome:
    """Result of running a test on one sample"""

    statistic: float
    threshold: float
    reject: bool
    tau2: float
    n: int
