"""Exception hierarchy shared by all truthlab modules."""


class TruthLabError(Exception):
    """Base class for all truthlab errors."""


class ConfigError(TruthLabError):
    """Invalid configuration or parameter values."""


class ParseError(TruthLabError):
    """Malformed instance / mechanism / report document."""

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{message} (field: {field})"
        super().__init__(message)


class InvalidAllocation(TruthLabError):
    """Allocation violates totality or task support."""


class InstanceTooLarge(TruthLabError):
    """Exact enumeration would exceed the configured cap."""


class UnsupportedVariant(TruthLabError):
    """Operation not defined for this mechanism variant."""


class BadDeviation(TruthLabError):
    """Deviation touches values outside the deviating machine."""


class PreconditionViolated(TruthLabError):
    """Caller violated a documented precondition."""


class NotMonotone(TruthLabError):
    """Oracle behaved non-monotonically where monotonicity is required."""


class Unbounded(TruthLabError):
    """Threshold search exceeded its cap without finding the boundary."""


class DeltaTooLarge(TruthLabError):
    """Corner shift exceeds a threshold value."""


class NegativeValue(TruthLabError):
    """A shift produced a negative processing time."""


class ResolutionTooCoarse(TruthLabError):
    """Facet cross-validation disagreed with the claimed facet."""


class GridTooFine(TruthLabError):
    """A probe grid exceeds the configured probe budget."""


class NoNiceStar(TruthLabError):
    """No (root, z) candidate met the nice-star threshold."""


class InsufficientMultiplicity(TruthLabError):
    """Too few qualifying parallel edges per leaf."""


class BoxNotFound(TruthLabError):
    """Box search exhausted its swap budget."""


class CertificateMismatch(TruthLabError):
    """A selected object failed its own certificate re-check (hard error)."""


class WitnessAssertionError(TruthLabError):
    """Witness bounds failed; carries the offending instance document."""

    def __init__(self, message, instance_doc=None):
        self.instance_doc = instance_doc
        super().__init__(message)
