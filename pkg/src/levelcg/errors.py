"""Exception types raised across the solver stack."""


class LevelCGError(Exception):
    """Base class for all package errors."""


class NonFiniteInput(LevelCGError, ValueError):
    pass


class DimMismatch(LevelCGError, ValueError):
    pass


class DegenerateDual(LevelCGError, ValueError):
    pass


class UnboundedSet(LevelCGError, ValueError):
    pass


class InvalidConstant(LevelCGError, ValueError):
    pass


class BadParameter(LevelCGError, ValueError):
    """Invalid model parameter (alpha, theta, psi, phi, ...)."""


class BadAlpha(BadParameter):
    pass


class BadPsi(BadParameter):
    pass


class BadPhi(BadParameter):
    pass


class BadTheta(BadParameter):
    pass


class InfeasibleStart(LevelCGError, ValueError):
    pass


class GridTooLarge(LevelCGError, ValueError):
    pass


class Truncated(LevelCGError):
    """Inner solver ran out of iterations before reaching its tolerance.

    The best state found is attached as ``output``.
    """

    def __init__(self, output, message="iteration budget exhausted"):
        super().__init__(message)
        self.output = output


class GammaDegenerate(LevelCGError):
    def __init__(self, gamma, message=None):
        super().__init__(message or f"objective dual weight {gamma:.3e} below floor")
        self.gamma = gamma


class BudgetExhausted(LevelCGError):
    """Outer loop stopped on a budget; ``solution`` holds the best iterate."""

    def __init__(self, solution, message="budget exhausted"):
        super().__init__(message)
        self.solution = solution


class ParseError(LevelCGError, ValueError):
    def __init__(self, row, col, message):
        super().__init__(f"row {row}, column {col}: {message}")
        self.row = row
        self.col = col


class EmptyData(LevelCGError, ValueError):
    pass


class ConfigError(LevelCGError, ValueError):
    pass
