class SpnError(Exception):
    """Base class for domain errors raised by this package."""


class SpnStructureError(SpnError, ValueError):
    """The network violates a structural or normalization constraint."""


class SpnFormatError(SpnError, ValueError):
    """A model or data document could not be parsed."""


class ZeroProbabilityError(SpnError, ValueError):
    """Conditioning evidence or MPE evidence has zero probability."""
