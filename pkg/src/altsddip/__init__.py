"""Stochastic dual dynamic integer programming with alternating cut generation."""

from .errors import (
    AltSddipError,
    ConfigError,
    ContractError,
    ModelError,
    RecourseError,
    SolverError,
    UnsupportedError,
)
from .model import MsipModel, Realization, ScenarioPath, StageTemplate, Triplets
from .simplex import BACKEND

__version__ = "0.1.0"

__all__ = [
    "AltSddipError", "ConfigError", "ContractError", "ModelError", "RecourseError",
    "SolverError", "UnsupportedError", "MsipModel", "Realization", "ScenarioPath",
    "StageTemplate", "Triplets", "BACKEND", "__version__",
]
