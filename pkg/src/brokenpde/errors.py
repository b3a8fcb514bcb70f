"""Exception hierarchy shared across the package."""


class BrokenPDEError(Exception):
    """Base class for all package errors."""


class ExprError(BrokenPDEError):
    pass


class ExprSyntaxError(ExprError):
    """Malformed expression text; ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class UnknownIdentifier(ExprError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r} (at offset {offset})")
        self.name = name
        self.offset = offset


class NonDifferentiable(ExprError):
    pass


class EvalError(ExprError):
    """Evaluation outside the expression's domain (division by zero, bad power)."""

    def __init__(self, message: str, location=None):
        if location is not None:
            message = f"{message} at {tuple(float(c) for c in location)}"
        super().__init__(message)
        self.location = location


class OutOfBounds(BrokenPDEError):
    pass


class NoConvergence(BrokenPDEError):
    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(f"{message}: {iterations} iterations, residual {residual:.3e}")
        self.iterations = iterations
        self.residual = residual


class WrongRegime(BrokenPDEError):
    pass


class DegenerateGradient(BrokenPDEError):
    pass


class DegenerateH(BrokenPDEError):
    pass


class RadiiTooSmall(BrokenPDEError):
    pass


class ZeroPolynomial(BrokenPDEError):
    pass


class NoSignChange(BrokenPDEError):
    pass


class ConfigError(BrokenPDEError):
    pass
