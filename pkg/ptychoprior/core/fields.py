"""
Field Types
2D real and complex arrays shared by every module
"""
from dataclasses import dataclass

import numpy as np

from ptychoprior.errors import DimensionError, DomainError


def _as_2d(data, dtype, kind):
    array = np.ascontiguousarray(data, dtype=dtype)
    if array.ndim != 2 or array.shape[0] < 1 or array.shape[1] < 1:
        raise DimensionError(f"{kind} must be a non-empty 2D array, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise DomainError(f"{kind} contains non-finite values")
    return array


@dataclass(frozen=True, eq=False)
class RealField:
    """Row-major 2D real array (detector frames, phase images)"""
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'data', _as_2d(self.data, np.float64, 'RealField'))

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    @classmethod
    def zeros(cls, height, width):
        return cls(np.zeros((height, width)))


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Row-major 2D complex array (object, probe, exit waves, Fourier fields)"""
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'data', _as_2d(self.data, np.complex128, 'ComplexField'))

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    @property
    def amplitude(self):
        return RealField(np.abs(self.data))

    @property
    def phase(self):
        return RealField(np.angle(self.data))

    @property
    def energy(self):
        return float(np.sum(np.abs(self.data) ** 2))

    @classmethod
    def ones(cls, height, width):
        return cls(np.ones((height, width), dtype=np.complex128))
