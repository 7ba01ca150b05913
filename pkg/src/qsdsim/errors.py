"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, everything else
raised by the numerics -> 3.
"""


class ConfigError(ValueError):
    """Invalid physical parameters or run configuration."""


class DivergenceError(RuntimeError):
    """A coefficient or trajectory left the numerically valid regime."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class PhysicalityError(RuntimeError):
    """A density matrix failed trace/Hermiticity/positivity checks."""


class EnsembleError(RuntimeError):
    """Too many trajectories aborted for the ensemble average to be trusted."""
