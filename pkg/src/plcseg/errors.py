"""Exception hierarchy shared by all pipeline stages.

Precondition violations (bad argument values, impossible requests) raise
plain ``ValueError``; the classes below mark *domain* outcomes that the
CLI maps to distinct exit codes.
"""

from __future__ import annotations


class PlcsegError(Exception):
    """Base class for all pipeline-domain errors."""


class ParseError(PlcsegError):
    """A cloud file could not be parsed.

    Carries the offending path plus a line number (ascii) or byte offset
    (binary) when known.
    """

    def __init__(self, message: str, path=None, line: int | None = None,
                 offset: int | None = None):
        loc = ""
        if line is not None:
            loc = f" (line {line})"
        elif offset is not None:
            loc = f" (byte offset {offset})"
        prefix = f"{path}: " if path is not None else ""
        super().__init__(f"{prefix}{message}{loc}")
        self.path = path
        self.line = line
        self.offset = offset


class ConfigError(PlcsegError):
    """A pipeline configuration violates a constraint or has unknown keys."""


class NoCandidatesError(PlcsegError):
    """No power-line candidate points survive a filtering stage."""


class NoSegmentsError(PlcsegError):
    """Clustering produced no power-line segment."""


class OrientationError(PlcsegError):
    """The candidate cloud has no dominant horizontal line direction."""


class CatenaryFitError(PlcsegError):
    """Catenary optimisation failed; the quadratic seed is kept as fallback.

    Attributes
    ----------
    quadratic : the quadratic model fitted as the initial guess, usable as
        the simplified conductor model.
    """

    def __init__(self, message: str, quadratic=None):
        super().__init__(message)
        self.quadratic = quadratic


class DegenerateSampleError(PlcsegError):
    """Every random minimal sample drawn by a robust fit was degenerate."""
