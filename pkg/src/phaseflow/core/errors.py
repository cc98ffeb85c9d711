"""Exception and warning types used across phaseflow."""


class PhaseflowError(Exception):
    """Base class for every error raised by this package."""


class GridValidationError(PhaseflowError, ValueError):
    pass


class NormalizationError(PhaseflowError, ValueError):
    pass


class DomainError(PhaseflowError, ValueError):
    """A field, index or characteristic left the domain it must stay in."""


class BasisIndexError(PhaseflowError, IndexError):
    pass


class DegenerateInputError(PhaseflowError, ValueError):
    pass


class FieldFormatError(PhaseflowError, ValueError):
    pass


class FieldLengthError(FieldFormatError):
    pass


class FieldIOError(PhaseflowError, OSError):
    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = str(path)


class DivergenceError(PhaseflowError, ArithmeticError):
    """Numerical blow-up. ``state`` carries whatever was last finite."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class ConvergenceError(PhaseflowError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(PhaseflowError, ValueError):
    pass


class StabilityWarning(UserWarning):
    pass


class AccuracyWarning(UserWarning):
    pass


class HermiticityError(PhaseflowError, ValueError):
    pass
