"""Discrete experiments on best Sobolev constants in variable-exponent spaces."""

__version__ = "0.1.0"

from .errors import VarsobError  # noqa: F401
from .grid import Grid, GridFunction, CellField, DiscreteMeasure  # noqa: F401
from .exponents import ExponentField, critical_set, sobolev_conjugate  # noqa: F401
from .norms import modular, luxemburg_norm, gradient_norm  # noqa: F401
from .solver import ExtremalProblem, ExtremalRecord, SolverOptions, solve, quotient_constant  # noqa: F401
