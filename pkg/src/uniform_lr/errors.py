"""Exception hierarchy.

``ConfigurationError`` signals bad user input (roles, table ids, flags); every
other ``UniformLRError`` is a numerical failure.
"""


class UniformLRError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(UniformLRError, ValueError):
    pass


class NumericalError(UniformLRError):
    pass


class DimensionMismatch(NumericalError, ValueError):
    pass


class NotPositiveDefinite(NumericalError):
    pass


class MaxIterationsExceeded(NumericalError):
    pass


class InvalidLevel(NumericalError, ValueError):
    pass


class NotACorrelationMatrix(NumericalError, ValueError):
    pass


class NonPositiveDiagonal(NumericalError, ValueError):
    pass


class InvalidEtaAlpha(NumericalError, ValueError):
    pass


class InternalConsistencyError(NumericalError):
    pass


class SingularDesign(NumericalError):
    pass


class InfeasibleTheta(NumericalError, ValueError):
    pass


class NonConvergence(NumericalError):
    pass


class SingularHessian(NumericalError):
    pass


class NonPositiveKappaWarning(UserWarning):
    """Estimated excess kurtosis is not positive; a floor was applied."""


class ReplicationFailure(NumericalError):
    """A Monte Carlo replication raised; carries the seeds needed to rerun it."""

    def __init__(self, message: str, master_seed: int, cell_id: int, rep: int):
        super().__init__(f"{message} (master_seed={master_seed}, cell_id={cell_id}, rep={rep})")
        self.master_seed = master_seed
        self.cell_id = cell_id
        self.rep = rep
