"""Error hierarchy.

Errors fall into three families so the CLI can map them to exit codes:
bad input data, bad configuration, and internal invariant failures.
"""


class DCAError(Exception):
    """Base class for every error raised by this package."""


class InputError(DCAError, ValueError):
    pass


class ConfigError(DCAError, ValueError):
    pass


class InternalError(DCAError, RuntimeError):
    pass


class ParseError(InputError):
    pass


class DimMismatch(InputError):
    pass


class EmptyInput(InputError):
    pass


class MissingArtifact(InputError):
    pass


class TooFewPoints(InputError):
    pass


class DegenerateInput(InputError):
    pass


class EmptyNeighborhood(InputError):
    """A query cast all of its rays without crossing a single bisector."""


class InvalidCoverage(ConfigError):
    pass


class InvalidMcs(ConfigError):
    pass


class DistillationError(InternalError):
    pass
