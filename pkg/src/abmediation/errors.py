"""Exception hierarchy.

Every error carries a stable ``name`` (the class name) so the CLI can print a
machine-readable diagnostic.
"""


class MediationError(Exception):
    @property
    def name(self) -> str:
        return type(self).__name__


class IngestError(MediationError):
    """Problem with the input rows (CLI exit status 2)."""


class MissingColumn(IngestError):
    pass


class BadTreatmentValue(IngestError):
    pass


class NonFiniteValue(IngestError):
    pass


class DegenerateArm(IngestError):
    pass


class SpecError(MediationError):
    """Invalid structural model specification (CLI exit status 2)."""


class DimensionMismatch(SpecError):
    pass


class EstimationError(MediationError):
    """Numerical failure while fitting (CLI exit status 3)."""


class SingularDesign(EstimationError):
    pass


class SingularOmega(EstimationError):
    pass


class NoConvergence(EstimationError):
    pass


class BandwidthTooLarge(EstimationError):
    pass


class NegativeVariance(EstimationError):
    pass


class ZeroStdError(EstimationError):
    pass


class InternalInconsistency(MediationError):
    """Two independent computations of the same quantity disagree."""
