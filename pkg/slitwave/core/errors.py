class SlitwaveError(Exception):
    """Base class for every failure the engine reports on purpose."""
    exit_code = 1


class ConfigError(SlitwaveError, ValueError):
    """Bad run configuration: unknown key, malformed value or violated constraint."""
    exit_code = 2

    def __init__(self, message: str, key: str = None, line: int = None):
        self.key = key
        self.line = line
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if key is not None:
            prefix += f"key '{key}': "
        super().__init__(prefix + message)


class NumericDomainError(SlitwaveError, ArithmeticError):
    """An argument lies outside the domain where a routine is accurate."""
    exit_code = 3


class SeriesConvergenceError(NumericDomainError):
    """A series hit its hard term cap before meeting the termination rule."""


class QuadratureError(NumericDomainError):
    """Quadrature produced non-finite intermediate values."""
