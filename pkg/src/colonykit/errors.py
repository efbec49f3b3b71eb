"""Exception taxonomy shared across the package.

Every error raised on purpose derives from :class:`ColonyKitError` so
callers can catch one base type at pipeline boundaries. Subclasses also
inherit the closest builtin (ValueError, ZeroDivisionError, ...) so code
written against the builtins keeps working.
"""


class ColonyKitError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(ColonyKitError, TypeError):
    """Arithmetic or comparison attempted across incompatible dimensions."""


class DivisionByZero(ColonyKitError, ZeroDivisionError):
    """Quantity division with a zero divisor."""


class InvalidInput(ColonyKitError, ValueError):
    """Input data violates a documented precondition."""


class InvalidMetadata(InvalidInput):
    """Stack metadata missing, malformed, or out of range."""


class InvalidGraph(ColonyKitError, ValueError):
    """Tracking or lineage graph violates a structural invariant."""


class InsufficientData(ColonyKitError, ValueError):
    """Not enough usable points for the requested computation."""


class DegenerateInput(ColonyKitError, ValueError):
    """Input admits no meaningful answer (e.g. clustering identical points)."""


class InconsistentInput(ColonyKitError, ValueError):
    """Two inputs that must agree do not (e.g. tables with unknown ids)."""


class ScenarioOverflow(ColonyKitError, RuntimeError):
    """Synthetic scenario outgrew the area it was given to render into."""


class EmptyPlot(ColonyKitError, ValueError):
    """Nothing to draw."""


class BatchFailed(ColonyKitError, RuntimeError):
    """Every replicate in a batch failed."""
