"""Exception types shared across the package."""


class FormatError(ValueError):
    """A file's content is malformed or not a supported encoding."""


class UnsupportedDtypeError(FormatError):
    """A volume file declares a datatype this package does not read."""


class ParameterError(ValueError):
    """An argument or configuration value violates a documented constraint."""


class PredictorError(RuntimeError):
    """Base class for failures at the segmentation-predictor boundary."""


class PredictorFailure(PredictorError):
    """The external predictor failed to produce output (exit status, timeout,
    missing file). Carries whatever diagnostics were captured."""

    def __init__(self, message, diagnostics=""):
        super().__init__(message)
        self.diagnostics = diagnostics


class ContractViolation(PredictorError):
    """A prediction violates the probability-map contract (geometry mismatch,
    values outside [0, 1], non-finite values)."""
