"""Exception types shared across the package."""


class SysIdError(Exception):
    """Base class for all library errors."""


class InputError(SysIdError, ValueError):
    """Malformed or inconsistent user input (shapes, kinds, config)."""


class RegimeError(SysIdError):
    """Operation applied to a system outside its spectral regime."""


class UnitRootError(RegimeError):
    """An eigenvalue sits too close to the unit circle for the requested
    analysis to be well posed."""


class UnreachableError(SysIdError):
    """The pair (A, C) is not reachable; the requested constant is undefined."""


class SingularGramError(SysIdError):
    """The Gram matrix is numerically singular.

    Carries ``lambda_min`` so a harness can log the conditioning pathology.
    """

    def __init__(self, message, lambda_min):
        super().__init__(message)
        self.lambda_min = float(lambda_min)


class IllConditionedJordanError(SysIdError):
    """A numerical rank decision inside Jordan inference was ambiguous."""


class NumericalError(SysIdError):
    """A dense solver failed or produced an unusable result."""


class OverflowHorizonError(SysIdError):
    """Simulation overflowed essentially immediately (system/horizon mismatch)."""


class SetupError(SysIdError):
    """An experiment precondition failed (e.g. the feedback designer cannot
    stabilize the unperturbed system)."""
