"""
Domain types for the extremal (water-filling) problem
"""

import math
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from apps.core.exceptions import DomainError
from apps.families.domain import IndexSet, IndexWeights


@dataclass(frozen=True)
class ExtremalProblem:
    """Minimize half the sum of v^4 under the norm and radius constraints"""

    family: object
    n: int
    r: float
    b: float = 1.0
    B: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise DomainError(f"Sample size must be an integer n >= 2, got {self.n}")
        object.__setattr__(self, 'n', int(self.n))
        for name in ('r', 'b', 'B'):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise DomainError(f"{name} must be a positive finite number, got {value}")
            object.__setattr__(self, name, float(value))

    @property
    def target_ratio(self):
        """b^2 / (B r)^2, the value C^2 I2 / I1 must reach"""
        return (self.b / (self.B * self.r)) ** 2

    @property
    def energy(self):
        """n (B r)^2, the required sum of v^2"""
        return self.n * (self.B * self.r) ** 2


@dataclass(frozen=True)
class ExtremalSolution:
    """Water-filled solution v_l^2 = z0^2 (1 - (c_l/C)^2)_+"""

    problem: ExtremalProblem
    cutoff: float
    level: float
    index_set: IndexSet
    v_squared: np.ndarray
    I0: float
    I1: float
    I2: float
    u_squared: float
    second_constraint_active: bool
    residuals: Dict[str, float] = field(default_factory=dict)

    @property
    def z0_squared(self):
        return self.level

    @property
    def u(self):
        return math.sqrt(self.u_squared)

    @property
    def weights(self):
        """Map MultiIndex -> v_l^2 over N(C)"""
        return IndexWeights(self.index_set.indices, self.v_squared)

    @property
    def coefficients(self):
        return self.index_set.coefficients

    def clamp(self):
        """(1 - (c_l/C)^2)_+ for every member"""
        return shape_factors(self.index_set.coefficients, self.cutoff)


def shape_factors(coefficients, cutoff):
    coefficients = np.asarray(coefficients, dtype=float)
    if math.isinf(cutoff):
        return np.ones_like(coefficients)
    return np.clip(1.0 - (coefficients / cutoff) ** 2, 0.0, None)
