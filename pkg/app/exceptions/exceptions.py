class GhostSimException(Exception):
    """Base Exception for all derivate exceptions"""


class ConfigurationException(GhostSimException):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


class ValidationException(GhostSimException):
    def __init__(self, message: str, field: str | None = None, index: int | None = None):
        location = field or ""
        if index is not None:
            location = f"{location}[{index}]"
        super().__init__(f"{location}: {message}" if location else message)
        self.field = field
        self.index = index


class DomainException(GhostSimException):
    pass


class ShapeMismatchException(GhostSimException):
    pass


class DegenerateEnsembleException(GhostSimException):
    pass


class RangeException(GhostSimException):
    pass


class OutputWriteException(GhostSimException):
    def __init__(self, path: str, reason: str):
        super().__init__(f"Unable to write {path}: {reason}")
        self.path = path


class InputReadException(GhostSimException):
    def __init__(self, path: str, reason: str):
        super().__init__(f"Unable to read {path}: {reason}")
        self.path = path


NUMERIC_EXCEPTIONS = (
    DomainException,
    ShapeMismatchException,
    DegenerateEnsembleException,
    RangeException,
)

IO_EXCEPTIONS = (OutputWriteException, InputReadException)
