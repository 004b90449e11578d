"""Exception types raised across the package."""


class QoipError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(QoipError, ValueError):
    pass


class UnsupportedDegreeError(QoipError, ValueError):
    pass


class MeshFormatError(QoipError, ValueError):
    """Malformed mesh file; the message carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConformityError(QoipError, ValueError):
    """Mesh is not face-to-face; ``pairs`` lists offending element pairs."""

    def __init__(self, message, pairs=()):
        super().__init__(message)
        self.pairs = list(pairs)


class NumericalFailureError(QoipError, ArithmeticError):
    pass


class UndefinedPairingError(QoipError):
    """A flux load cannot be paired with a discontinuous test function."""


class SingularSystemError(QoipError, ArithmeticError):
    pass


class IndefiniteMatrixError(QoipError, ArithmeticError):
    pass


class DegenerateDenominatorError(QoipError, ArithmeticError):
    pass
