"""Exception hierarchy shared by every module."""


class CommonFixError(Exception):
    """Base class; the CLI maps these to exit code 2."""


class ConfigurationError(CommonFixError, ValueError):
    pass


class DimensionError(CommonFixError, ValueError):
    def __init__(self, left: int, right: int, what: str = "points"):
        super().__init__(f"dimension mismatch between {what}: {left} vs {right}")
        self.left = left
        self.right = right


class ParseError(CommonFixError, ValueError):
    def __init__(self, message: str, text: str = "", offset: int = 0):
        detail = f"{message} at offset {offset}"
        if text:
            detail += f"\n  {text}\n  {' ' * offset}^"
        super().__init__(detail)
        self.offset = offset
        self.text = text


class EvaluationError(CommonFixError, ArithmeticError):
    pass


class CoverageError(CommonFixError):
    """No branch guard matched the input point."""


class SelfMapError(CommonFixError):
    """A map sent a point outside its domain."""


class ValidationError(CommonFixError, ValueError):
    def __init__(self, invariant: str, detail: str = ""):
        super().__init__(f"{invariant}: {detail}" if detail else invariant)
        self.invariant = invariant


class ArgumentError(CommonFixError, ValueError):
    """An argument lies outside a function's domain of definition."""
