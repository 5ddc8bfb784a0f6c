"""Exception types shared across the package."""


class BayesdialError(Exception):
    """Base class for all package-specific errors."""


class DomainParseError(BayesdialError):
    """Domain file could not be parsed (message carries line info when available)."""


class DomainValidationError(BayesdialError):
    """Domain file parsed, but violates a structural invariant."""


class SupportMismatchError(BayesdialError):
    """Two distributions with different supports were combined."""


class EvidenceError(BayesdialError):
    """Evidence refers to an unknown variable or value."""


class ZeroProbabilityEvidenceError(BayesdialError):
    """The supplied evidence has zero likelihood under the network."""


class DegenerateSamplesError(BayesdialError):
    """Dirichlet fitting received samples it cannot fit; smooth the inputs first."""


class RuleInstantiationError(BayesdialError):
    """A rule references a variable, value or parameter that does not exist."""
