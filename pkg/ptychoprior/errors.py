"""
Exception Hierarchy
"""


class PtychoError(Exception):
    """Base class for every error raised by ptychoprior"""


class DimensionError(PtychoError):
    """Array sizes or windows are inconsistent"""


class DomainError(PtychoError):
    """A value lies outside the range an operation accepts"""


class FormatError(PtychoError):
    """Malformed PTYF payload; `offset` is the byte position of the problem"""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class EmptyPatternError(PtychoError):
    """A scan pattern holds no valid probe position"""


class DivergedError(PtychoError):
    """An iterative solver produced non-finite values"""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class GradientError(PtychoError):
    """Backward pass or optimizer step could not be carried out"""


class ArchitectureMismatchError(PtychoError):
    """A checkpoint does not match the requested network or geometry"""


class SweepSpecError(PtychoError):
    """A sweep specification file is invalid"""
