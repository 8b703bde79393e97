"""Exception types shared across the package."""


class DDEChartsError(Exception):
    """Base class for all errors raised by this package."""


class UnknownParameter(DDEChartsError, KeyError):
    """A slot referenced a parameter name absent from the parameter point."""

    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"unknown parameter {self.name!r}"


class SingularJacobian(DDEChartsError):
    """|dD/dlambda| fell below the rank-deficiency threshold at a root.

    The continuation ODE dlambda/dp = -(dD/dp)/(dD/dlambda) is singular
    there and integration cannot proceed.
    """

    def __init__(self, message: str, param_value: float | None = None,
                 root_index: int | None = None):
        super().__init__(message)
        self.param_value = param_value
        self.root_index = root_index


class ConvergenceFailure(DDEChartsError):
    """Newton refinement or seeding could not reach the requested tolerance."""


class DegenerateProblem(DDEChartsError):
    """The problem has no delayed content at this point (pure polynomial)."""


class NonFiniteState(DDEChartsError):
    """A numeric state or input became non-finite."""


class ConfigError(DDEChartsError):
    """A problem configuration is syntactically or semantically invalid."""

    def __init__(self, message: str, line: int | None = None,
                 column: int | None = None):
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)
        self.line = line
        self.column = column
