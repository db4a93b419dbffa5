#!/usr/bin/env python3
"""
Exception and warning hierarchy for kron-gemini
ConfigError maps to CLI exit code 2, NumericalError to exit code 3
"""

from typing import Any, Optional


class KronGeminiError(Exception):
    """Base class for all library errors"""

    exit_code = 1


class ConfigError(KronGeminiError):
    """Invalid parameters, dimensions or settings"""

    exit_code = 2


class NumericalError(KronGeminiError):
    """A numerical routine could not produce a valid result"""

    exit_code = 3


class DimensionGuard(ConfigError):
    pass


class DimensionMismatch(ConfigError):
    pass


class DimensionTooSmall(ConfigError):
    pass


class TooManyEdges(ConfigError):
    pass


class InvalidEdge(ConfigError):
    pass


class FoldTooSmall(ConfigError):
    pass


class ZeroTruth(ConfigError):
    pass


class NotPSD(NumericalError):
    def __init__(self, message: str, min_eigenvalue: Optional[float] = None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class NotPD(NumericalError):
    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message)
        self.step = step


class SingularInput(NumericalError):
    pass


class DegenerateColumn(NumericalError):
    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index


class DegenerateRow(NumericalError):
    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index


class NotConverged(NumericalError):
    """Iteration limit reached; the partial solution is attached"""

    def __init__(self, message: str, residual: float = float("nan"),
                 solution: Any = None, column: Optional[int] = None):
        super().__init__(message)
        self.residual = residual
        self.solution = solution
        self.column = column


class ConcentrationOutOfRange(UserWarning):
    """Theory-mode rate clamped below 1/3"""


class DegenerateSolution(UserWarning):
    """CLIME returned the zero matrix"""


class PDRepairWarning(UserWarning):
    """Symmetrized CLIME estimate was floored to positive definite"""
