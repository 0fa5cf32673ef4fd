"""Exception types raised by dtd_landmarks.

Tracking and detection failures are reported as statuses, not exceptions;
the types below cover contract violations, malformed inputs and I/O.
"""


class DTDError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(DTDError, ValueError):
    pass


class NoOverlap(DTDError, ValueError):
    pass


class ImageTooSmall(DTDError, ValueError):
    pass


class DimensionMismatch(DTDError, ValueError):
    pass


class EmptyPointList(DTDError, ValueError):
    pass


class NoValidPoints(DTDError):
    pass


class DegenerateBox(DTDError, ValueError):
    pass


class InsufficientSupport(DTDError):
    pass


class EmptyImage(DTDError, ValueError):
    pass


class OutOfBounds(DTDError, ValueError):
    pass


class RegionOutsideFrame(DTDError, ValueError):
    pass


class ShapeMismatch(DTDError, ValueError):
    pass


class DegenerateRegion(DTDError, ValueError):
    pass


class EmptyDataset(DTDError, ValueError):
    pass


class ContractError(DTDError):
    """An operation was called in a state its precondition excludes."""


class EmptySequence(DTDError, ValueError):
    pass


class InvalidSpec(DTDError, ValueError):
    pass


class UnreadableFile(DTDError):
    def __init__(self, path, reason: str):
        self.path = str(path)
        self.reason = reason
        super().__init__(f"Error reading {self.path}: {reason}")


class MixedDimensions(DTDError):
    pass


class ModelFormatError(DTDError, ValueError):
    """A cascade model, architecture config or weights file is malformed."""


class IoError(DTDError, OSError):
    def __init__(self, path, reason: str):
        self.path = str(path)
        self.reason = reason
        super().__init__(f"Error writing {self.path}: {reason}")
