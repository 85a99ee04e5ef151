"""Exception hierarchy shared by every subpackage."""


class SentforgeError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(SentforgeError, ValueError):
    pass


class SequenceTooShortError(SentforgeError, ValueError):
    pass


class PoolingError(SentforgeError, ValueError):
    pass


class EmptySequenceError(SentforgeError, ValueError):
    pass


class ConfigError(SentforgeError, ValueError):
    pass


class LabelError(SentforgeError, ValueError):
    pass


class TrainingError(SentforgeError, RuntimeError):
    pass


class VocabularyError(SentforgeError, ValueError):
    pass


class ParseError(SentforgeError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyAfterFilter(SentforgeError, ValueError):
    """Raised when preprocessing leaves nothing of a comment."""


class SplitError(SentforgeError, ValueError):
    pass


class MetricsError(SentforgeError, ValueError):
    pass


class InputError(SentforgeError, ValueError):
    pass


class UndefinedKappa(SentforgeError, ArithmeticError):
    """Chance agreement is 1 but observed agreement is not."""


class CheckpointError(SentforgeError, ValueError):
    pass
