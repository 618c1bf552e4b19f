"""Exception types shared across modules.

``DomainError`` subclasses signal that the inputs were well-formed but the
geometry or scene does not admit an answer; the CLI maps them to exit code 3.
"""


class DomainError(Exception):
    """Well-formed input without a valid answer (no path, degenerate geometry...)."""


class InsufficientCorrespondences(DomainError):
    pass


class DegenerateGeometry(DomainError):
    pass


class AmbiguousPose(DomainError):
    pass


class NonPlanarMotion(DomainError):
    pass


class NoPath(DomainError):
    pass


class InvalidState(DomainError):
    pass
