"""Exception types shared across the package."""


class PerfquantError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInput(PerfquantError):
    """Input data violates a structural precondition (empty frame, bad shape, ...)."""


class ParseError(PerfquantError):
    """A data file could not be parsed.

    Carries the 1-based line number when the offending line is known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DomainError(PerfquantError):
    """A numeric argument is outside the mathematical domain of an operation."""


class CriticalDampingError(DomainError):
    """Three-exponential decomposition does not exist at critical damping."""


class ResonanceError(DomainError):
    """Input decay constant coincides with a natural time constant of the system."""


class InputTooShort(InvalidInput):
    """Time-series has too few samples for the requested operation."""


class FeatureError(PerfquantError):
    """Feature extraction from a fit is not possible (e.g. fit did not converge)."""


class NormalizationError(PerfquantError):
    """Healthy-reference normalization failed (zero reference rate feature)."""


class TrainingError(PerfquantError):
    """Classifier training set is unusable (e.g. only one class present)."""


class PredictError(PerfquantError):
    """Prediction input is unusable (e.g. non-finite feature values)."""


class NoPredictionForCase(PerfquantError):
    """Patient-level aggregation received zero predicted regions."""


class EvalError(PerfquantError):
    """Evaluation protocol preconditions are not met (cohort too small, ...)."""
