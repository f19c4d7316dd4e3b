"""
Exception types shared by the TKAN benchmark modules.

Library code raises these; only cli.py catches them and turns them into
exit codes.
"""

from typing import Optional


class TkanError(Exception):
    """Base class for every error raised by this project"""


class DimensionError(TkanError, ValueError):
    """Operand shapes do not conform"""


class ContractError(TkanError, ValueError):
    """A documented precondition was violated"""


class UndefinedMetricError(TkanError, ArithmeticError):
    """A metric has no finite value for the given inputs (e.g. R² on a constant truth)"""


class DegenerateWindowError(TkanError, ArithmeticError):
    """A moving-median window has a nonpositive median and cannot be used as a divisor"""

    def __init__(self, index: int, median: float):
        self.index = index
        self.median = median
        super().__init__(f"moving median at index {index} is {median!r} (must be > 0)")


class CheckpointError(TkanError, OSError):
    """A checkpoint is missing, corrupt, or does not match the model it is loaded into"""

    def __init__(self, message: str, tensor: Optional[str] = None):
        self.tensor = tensor
        super().__init__(message)


class FetchError(TkanError, IOError):
    """The exchange client gave up after exhausting its retries"""
