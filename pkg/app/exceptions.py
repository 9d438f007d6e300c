class AnalysisError(Exception):
    """Base class for failures raised by the degree / persistence library."""


class EvaluationError(AnalysisError):
    """A map or profile produced non-finite values."""


class AdmissibilityError(AnalysisError):
    """Target too close to the image of the boundary, or a window/region precondition failed."""


class IncompleteCertificateError(AnalysisError):
    """Preimages could not be enumerated and certified within the budget."""


class NotACorrectorError(AnalysisError):
    """L + A is singular, so A does not correct L."""


class EpsTooLargeError(AnalysisError):
    """Two independent selections gave different degrees; halve ε and retry."""


class TransversalityError(AnalysisError):
    """im L + F1 (or im L + C(ker L)) does not span the target space."""


class ConstructionError(AnalysisError):
    """A discretization invariant failed at build time."""
