"""Stage-structured predator-prey model: equilibria, stability, simulation and bifurcation analysis."""

from .errors import ConfigError, DomainError, NumericalError, StageppError
from .model import PARAM_NAMES, Params, State, jacobian, load_preset, rhs, table1, table2

__all__ = [
    "ConfigError",
    "DomainError",
    "NumericalError",
    "StageppError",
    "PARAM_NAMES",
    "Params",
    "State",
    "jacobian",
    "load_preset",
    "rhs",
    "table1",
    "table2",
]
