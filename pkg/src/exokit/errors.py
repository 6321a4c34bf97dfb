"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class ToolkitError(Exception):
    """Base class for domain errors raised by this package."""


class FormatError(ToolkitError):
    """A text or binary input does not conform to its documented format."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        if line is not None:
            where = f"line {line}" if column is None else f"line {line}, column {column}"
            message = f"{where}: {message}"
        super().__init__(message)
        self.line = line
        self.column = column


class ConvergenceError(ToolkitError):
    """An iterative solver exhausted its iteration budget."""


class JointLimitError(ConvergenceError):
    """A passive-configuration solve stalled against a joint limit."""


class SingularConfigurationError(ToolkitError):
    """Coupling geometry is degenerate (zero-length difference vector)."""


class SelfMotionError(ConvergenceError):
    """Projection failed mid-walk.  ``poses`` holds the samples collected
    before the failure."""

    def __init__(self, message: str, poses: list):
        super().__init__(message)
        self.poses = poses
