"""Exception hierarchy shared by every module of the package."""


class DnccError(Exception):
    """Base class for all package errors."""


class DimensionError(DnccError, ValueError):
    pass


class DomainError(DnccError, ValueError):
    """A value lies outside the domain of a function (e.g. log of a non-positive)."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NumericError(DnccError, ArithmeticError):
    pass


class ContractError(DnccError, ValueError):
    """A caller violated a documented precondition."""


class ConfigurationError(DnccError, ValueError):
    pass


class FormatError(DnccError, ValueError):
    """Malformed file. ``offset`` is a byte offset (binary) or line number (text)."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class DegenerateWeightError(DnccError, ValueError):
    def __init__(self, message, head=None, klass=None):
        super().__init__(message)
        self.head = head
        self.klass = klass


class InternalConsistencyError(DnccError, AssertionError):
    """An identity that must hold analytically was violated numerically."""


class TrainingAborted(DnccError, RuntimeError):
    def __init__(self, message, epoch=None, step=None):
        super().__init__(message)
        self.epoch = epoch
        self.step = step
