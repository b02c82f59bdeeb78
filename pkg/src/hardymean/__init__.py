"""Numerical toolkit for weighted strong-type inequalities of quasi-arithmetic mean operators."""

from .conditions import ExponentPair
from .errors import DivergenceError, HardyMeanError, ValidationError
from .funcdsl import parse
from .quadrature import QuadConfig

__version__ = "0.1.0"

__all__ = ["ExponentPair", "DivergenceError", "HardyMeanError", "ValidationError", "QuadConfig", "parse"]
