"""
Custom errors for use in this application.

The command-line front end maps each family onto an exit code, so new errors
should subclass one of the family bases below rather than Exception directly.
"""


class WeakMeasurementError(Exception):
    """Base class for every error raised by this application."""


class RejectedInputError(WeakMeasurementError, ValueError):
    """
    Raised whenever an operation receives input outside its domain: mismatched
    dimensions, non-unit axes, non-Hermitian matrices, pointer waves that do not
    fit their grid, and so on.
    """


class ConfigurationError(RejectedInputError):
    """
    Raised whenever a configuration document or environment setting fails
    validation. Carries the offending keys so they can be reported back.
    """

    def __init__(self, message: str, offending_keys=()):
        super().__init__(message)
        self.offending_keys = tuple(offending_keys)


class PhysicallyImpossibleError(WeakMeasurementError):
    """Base class for requests that quantum mechanics itself rules out."""


class OrthogonalPostselectionError(PhysicallyImpossibleError):
    """
    Raised whenever the pre- and postselected states are orthogonal (to within the
    overlap floor), which leaves the weak value undefined.
    """


class ImpossibleSequenceError(PhysicallyImpossibleError):
    """
    Raised whenever a pre/post pair cannot be connected through any outcome of the
    intermediate measurement, so the ABL denominator vanishes.
    """


class PostselectionFailedError(PhysicallyImpossibleError):
    """
    Raised whenever the postselection probability drops below the probability
    floor and the conditional pointer wave is undefined.
    """


class NodeError(WeakMeasurementError):
    """
    Raised whenever the flow-line velocity is requested at a near-node of the
    field, where the phase gradient is singular.
    """


class NumericalFailureError(WeakMeasurementError):
    """Base class for numerical procedures that could not produce a result."""


class IntegrationFailedError(NumericalFailureError):
    """
    Raised whenever a flow line cannot step past a node even after the maximum
    number of step halvings.
    """


class EigensolverError(NumericalFailureError):
    """Raised whenever the Jacobi sweeps fail to converge."""
