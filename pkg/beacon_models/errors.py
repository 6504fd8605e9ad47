class BeaconError(Exception):
    """Base class for errors raised by the modelling layer."""


class DimensionError(BeaconError, ValueError):
    pass


class FactorizationError(BeaconError, RuntimeError):
    pass


class UnsupportedKernelError(BeaconError, ValueError):
    pass


class PoolExhaustedError(BeaconError, RuntimeError):
    pass


class PoolFormatError(BeaconError, ValueError):
    def __init__(self, message: str, line: int = 0) -> None:
        self.line = line
        if line:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegenerateDataWarning(UserWarning):
    pass
