"""Exception hierarchy shared across the simulator."""


class FedSimError(Exception):
    pass


class DimensionError(FedSimError, ValueError):
    pass


class NumericError(FedSimError, ArithmeticError):
    pass


class ParameterError(FedSimError, ValueError):
    pass


class UnsupportedError(FedSimError, NotImplementedError):
    pass


class ProtocolError(FedSimError, RuntimeError):
    pass


class DivergenceError(NumericError):
    """A local or server iterate became non-finite.

    ``round`` and ``step`` locate the failure; either may be None when the
    failure happened outside a local loop.
    """

    def __init__(self, message, round=None, client=None, step=None):
        super().__init__(message)
        self.round = round
        self.client = client
        self.step = step

    def __str__(self):
        where = ", ".join(
            f"{name}={value}"
            for name, value in (("round", self.round), ("client", self.client), ("step", self.step))
            if value is not None
        )
        base = super().__str__()
        return f"{base} ({where})" if where else base


class ConfigError(FedSimError, ValueError):
    """Invalid experiment configuration; ``path`` names the offending field."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class UndefinedMetricError(FedSimError, ValueError):
    pass
