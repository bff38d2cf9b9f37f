"""Numerical tolerances and exception types shared by every module."""
from dataclasses import dataclass

__all__ = ['Tolerances', 'TOL', 'OverlapError', 'DimensionError', 'GridMismatchError',
           'ResolutionError', 'NotHermitianError', 'ImaginaryResidueError',
           'ConfigError', 'ValidationError']


@dataclass(frozen=True)
class Tolerances:
    hermitian: float = 1e-12          # relative to max|A|
    trace: float = 1e-12
    gram: float = 1e-10
    psd: float = 1e-10                # relative to max|G|
    unitary: float = 1e-10
    orthogonal: float = 1e-8
    rotation_real: float = 1e-10
    commuting: float = 1e-10
    imag_residue: float = 1e-8        # relative to max(1, |value|)
    state_trace: float = 1e-12
    psd_split: float = 1e-10


TOL = Tolerances()


class OverlapError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(OverlapError, ValueError):
    pass


class GridMismatchError(OverlapError, ValueError):
    pass


class ResolutionError(OverlapError, ValueError):
    pass


class NotHermitianError(OverlapError, ValueError):
    pass


class ImaginaryResidueError(OverlapError, ArithmeticError):
    pass


class ConfigError(OverlapError, ValueError):
    pass


class ValidationError(OverlapError):
    pass
