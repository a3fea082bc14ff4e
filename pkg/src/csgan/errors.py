"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Bad user-supplied configuration or inputs (CLI exit status 2)."""

    def __init__(self, message, code="CONFIG"):
        super().__init__(message)
        self.code = code


class InvariantError(ValueError):
    """An internal data invariant was violated (e.g. an out-of-range token id)."""


class ShapeError(ValueError):
    """Operands of an array op have incompatible shapes."""

    def __init__(self, op, shape_a, shape_b, detail=""):
        msg = f"{op}: incompatible shapes {tuple(shape_a)} and {tuple(shape_b)}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.shape_a = tuple(shape_a)
        self.shape_b = tuple(shape_b)


class NonFiniteError(FloatingPointError):
    """A forward value, gradient or loss became NaN or infinite."""


class TrainingError(RuntimeError):
    """Training diverged or otherwise failed (CLI exit status 3)."""
