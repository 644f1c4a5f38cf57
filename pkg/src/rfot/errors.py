"""Exception hierarchy shared across the package."""


class RFoTError(Exception):
    """Base class for all package errors."""


class EmptyInputError(RFoTError, ValueError):
    pass


class ShapeError(RFoTError, ValueError):
    pass


class SizeError(RFoTError, ValueError):
    pass


class DataError(RFoTError):
    """Dataset could not be parsed or failed validation."""


class ParseError(DataError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(DataError, ValueError):
    pass


class BackendError(RFoTError):
    """The LLM backend returned a non-success answer."""

    def __init__(self, message: str, status: int | None = None):
        self.status = status
        super().__init__(message)


class TransportError(BackendError):
    """Retriable network-level failure (timeout, refused connection)."""


class CassetteMissError(BackendError):
    def __init__(self, fingerprint: str, detail: str = "no recorded completion"):
        self.fingerprint = fingerprint
        super().__init__(f"cassette miss for fingerprint {fingerprint}: {detail}")


class PersistenceError(RFoTError, OSError):
    pass


class ThoughtFormatError(RFoTError, ValueError):
    """An LLM reply did not carry the expected output marker."""


class GenerationError(RFoTError):
    pass


class PredictionError(RFoTError):
    pass


class ConfigError(RFoTError, ValueError):
    pass
