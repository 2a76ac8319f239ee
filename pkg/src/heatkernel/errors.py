"""Exception hierarchy shared by all modules.

The CLI maps ``ConfigError`` to exit code 2 and ``SolverError`` to exit code 3.
"""


class HeatKernelError(Exception):
    """Base class for all package errors."""


class DomainError(HeatKernelError, ValueError):
    """An argument lies outside the domain of the operation."""


class UnsupportedProfileError(HeatKernelError, ValueError):
    """The operation is only defined for power-law ends."""


class UnsupportedClassError(HeatKernelError, ValueError):
    """An end is neither critical nor subcritical."""


class SmallTimeError(DomainError):
    """Requested time lies in the small-time (Li-Yau) regime."""


class CaseMismatchError(HeatKernelError, ValueError):
    """The requested regime does not exist for the given configuration."""


class ConfigError(HeatKernelError, ValueError):
    """Scenario configuration is malformed or violates a precondition."""


class SolverError(HeatKernelError, RuntimeError):
    """Numerical solve failed or would be contaminated."""


class BoundaryContaminationError(SolverError):
    """Grid is too short for the declared time horizon."""


class TruncationError(SolverError):
    """Resolvent parameter is below the grid's safe floor."""


class FitError(HeatKernelError, ValueError):
    """Sample is degenerate and cannot be fitted."""
