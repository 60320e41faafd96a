"""Exception hierarchy shared by every sketchreg module."""


class SketchRegError(Exception):
    """Base class for all errors raised by sketchreg."""


class InvalidMatrix(SketchRegError, ValueError):
    """Input is not a finite 1-D/2-D real array of the expected shape."""


class NonPowerOfTwoLength(SketchRegError, ValueError):
    pass


class ConvergenceFailure(SketchRegError, ArithmeticError):
    """The SVD did not converge; the input is numerically ill-posed."""


class InvalidDimensions(SketchRegError, ValueError):
    pass


class NonPowerOfTwoN(InvalidDimensions):
    pass


class SparsityExceedsRows(InvalidDimensions):
    pass


class DimensionMismatch(SketchRegError, ValueError):
    pass


class RankDeficient(SketchRegError, ValueError):
    pass


class TooLarge(SketchRegError, MemoryError):
    pass


class ZeroDirection(SketchRegError, ValueError):
    pass


class InvalidParams(SketchRegError, ValueError):
    pass


class NotOrthonormal(SketchRegError, ValueError):
    pass


class TNormTooLarge(SketchRegError, ValueError):
    """||I - U^T S^T S U||_2 exceeds 1/2; use more sketch rows."""


class ConfigInvalid(SketchRegError, ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class EmptyInput(SketchRegError, ValueError):
    pass


class InvariantViolation(SketchRegError, AssertionError):
    """A computed report broke a mathematical invariant (library bug)."""
