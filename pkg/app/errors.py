"""
Exception hierarchy for the metric learning engine

ConfigurationError covers bad inputs (exit status 1 on the CLI),
SoftMineRuntimeError covers failures while computing (exit status 2).
"""
from typing import Optional, Sequence


class SoftMineError(Exception):
    """Base class for every error raised by the package"""


class ConfigurationError(SoftMineError, ValueError):
    """Invalid input, configuration or file content"""


class SoftMineRuntimeError(SoftMineError, RuntimeError):
    """Failure during a computation on valid inputs"""


class ZeroNormRow(ConfigurationError):
    def __init__(self, row: int, norm: float):
        self.row = row
        self.norm = norm
        super().__init__(f"Row {row} has norm {norm:.3e}, cannot be L2-normalized")


class NonFiniteInput(ConfigurationError):
    def __init__(self, what: str):
        self.what = what
        super().__init__(f"{what} contains non-finite values")


class LabelOutOfRange(ConfigurationError):
    def __init__(self, label: int, n_classes: int):
        self.label = label
        self.n_classes = n_classes
        super().__init__(f"Label {label} is out of range for {n_classes} context vectors")


class InsufficientClasses(ConfigurationError):
    def __init__(self, available: int, required: int, context: str = "batch"):
        self.available = available
        self.required = required
        super().__init__(
            f"{context}: {available} classes available, at least {required} required"
        )


class FormatError(ConfigurationError):
    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        self.line = line
        self.path = path
        location = ""
        if path:
            location += f"{path}"
        if line is not None:
            location += f":{line}" if path else f"line {line}"
        super().__init__(f"{location}: {message}" if location else message)


class DimensionMismatch(ConfigurationError):
    def __init__(
        self,
        message: str,
        expected: Optional[Sequence[int]] = None,
        actual: Optional[Sequence[int]] = None,
        row: Optional[int] = None,
    ):
        self.expected = tuple(expected) if expected is not None else None
        self.actual = tuple(actual) if actual is not None else None
        self.row = row
        super().__init__(message)


class NoPositiveInGallery(ConfigurationError):
    def __init__(self, label: int, query: int):
        self.label = label
        self.query = query
        super().__init__(
            f"Query {query} (label {label}) has no other sample of its class in the gallery"
        )


class CheckpointFormatError(ConfigurationError):
    """Checkpoint file is truncated, has a wrong magic or an unknown version"""


class NonFiniteEvaluation(SoftMineRuntimeError):
    def __init__(self, index: Sequence[int], value: float):
        self.index = tuple(index)
        self.value = value
        super().__init__(f"Function returned {value} at perturbed coordinate {self.index}")


class NonFiniteLoss(SoftMineRuntimeError):
    def __init__(self, epoch: int, batch: int, dump_path: Optional[str] = None):
        self.epoch = epoch
        self.batch = batch
        self.dump_path = dump_path
        detail = f", batch dumped to {dump_path}" if dump_path else ""
        super().__init__(f"Non-finite loss at epoch {epoch} batch {batch}{detail}")


class MeanSeparationFailure(SoftMineRuntimeError):
    def __init__(self, placed: int, requested: int, attempts: int, min_angle_deg: float):
        self.placed = placed
        self.requested = requested
        super().__init__(
            f"Placed {placed}/{requested} class means with {min_angle_deg} deg separation "
            f"after {attempts} attempts"
        )
