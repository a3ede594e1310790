"""Exception hierarchy shared by all solver layers."""


class AltSddipError(Exception):
    """Base class for every error raised by this package."""


class ModelError(AltSddipError):
    """Malformed model data or a dimension mismatch."""


class ConfigError(AltSddipError):
    """Invalid algorithm or command configuration."""


class ContractError(AltSddipError):
    """A caller violated an operation precondition."""


class SolverError(AltSddipError):
    """Numerical breakdown in the LP/MILP engines."""


class RecourseError(AltSddipError):
    """A stage subproblem turned out infeasible (no relatively complete recourse)."""


class UnsupportedError(AltSddipError):
    """The requested transformation is not available for this model."""
