"""Error taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, SolverError -> 3,
PowerFlowDivergedError -> 4.
"""


class FlexgridError(Exception):
    """Base class for all package errors."""


class ConfigError(FlexgridError):
    """Invalid configuration, parameters or input files."""


class TopologyError(ConfigError):
    """Structurally invalid network description (cycle, dangling bus, ...)."""


class SolverError(FlexgridError):
    """Scheduling optimization failed (iteration limit, budget exceeded)."""


class PowerFlowDivergedError(FlexgridError):
    """Sweep iteration exceeded the iteration limit."""

    def __init__(self, message: str, mismatch: float | None = None):
        super().__init__(message)
        self.mismatch = mismatch


class NumericalConsistencyError(FlexgridError):
    """A dual-formula identity check failed beyond tolerance."""
