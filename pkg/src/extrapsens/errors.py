"""Exception hierarchy shared across the package."""


class ExtrapSensError(Exception):
    """Base class for all package errors."""


# -- data -------------------------------------------------------------------

class DataError(ExtrapSensError):
    """Input data could not be turned into a valid Dataset."""


class MissingColumn(DataError):
    pass


class MissingValue(DataError):
    pass


class NonBinaryExposure(DataError):
    pass


class NonBinaryOutcome(DataError):
    pass


class DegenerateColumn(DataError):
    """A covariate is constant or exactly collinear with the others.

    ``column`` names the offending covariate so callers can drop it.
    """

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class IoFailure(DataError):
    pass


# -- numerics ---------------------------------------------------------------

class NumericError(ExtrapSensError):
    """A numerical routine failed."""


class GLMError(NumericError):
    pass


class NonConvergence(GLMError):
    pass


class SeparationDetected(GLMError):
    pass


class RankDeficient(GLMError):
    pass


class CovarianceNotPSD(GLMError):
    pass


class DimensionMismatch(NumericError, ValueError):
    pass


class LengthMismatch(NumericError, ValueError):
    pass


class ModelFitFailed(NumericError):
    """A nuisance model could not be fitted for a covariate subset."""

    def __init__(self, model, subset, cause, orbit=None, candidate=None):
        self.model = model
        self.subset = tuple(subset)
        self.cause = cause
        self.orbit = orbit
        self.candidate = candidate
        where = f" (orbit {orbit}, candidate {candidate!r})" if orbit is not None else ""
        super().__init__(
            f"{model} model failed on subset {list(self.subset)}{where}: {cause}"
        )


class SplineError(NumericError, ValueError):
    pass


class TooManyKnots(SplineError):
    pass


class DegenerateX(SplineError):
    pass


class StudyAborted(NumericError):
    """Too many simulation replicates failed."""
