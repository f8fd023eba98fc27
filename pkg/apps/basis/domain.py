from dataclasses import dataclass
from typing import Tuple

import numpy as np
from django.db import models

from apps.core.exceptions import DomainError


class BasisKind(models.TextChoices):
    FOURIER = 'fourier', 'Fourier'
    HAAR = 'haar', 'Haar'
    WALSH = 'walsh', 'Walsh'


@dataclass(frozen=True)
class DesignPoint:
    """A point of the unit cube [0, 1]^d"""

    coordinates: Tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(u) for u in np.atleast_1d(self.coordinates))
        if any(not 0.0 <= u <= 1.0 for u in values):
            raise DomainError(f"Design point {values} lies outside [0, 1]^d")
        object.__setattr__(self, 'coordinates', values)

    @property
    def dimension(self):
        return len(self.coordinates)


def as_points(points):
    """Validate design points as an (n, d) array in [0, 1]^d; a flat sequence is one point"""
    if isinstance(points, DesignPoint):
        points = [points.coordinates]
    array = np.asarray(points, dtype=float)
    if array.ndim == 0:
        array = array.reshape(1, 1)
    elif array.ndim == 1:
        array = array.reshape(1, -1)
    if array.ndim != 2:
        raise DomainError("Design points must form an (n, d) array")
    if array.size and (np.any(array < 0.0) or np.any(array > 1.0) or not np.all(np.isfinite(array))):
        raise DomainError("Design points must lie in [0, 1]^d")
    return array
