"""Exception hierarchy shared across the package."""


class HbfError(Exception):
    """Base class for all package errors."""


class ShapeError(HbfError, ValueError):
    pass


class DomainError(HbfError, ValueError):
    pass


class ConfigError(HbfError, ValueError):
    pass


class ConstraintError(HbfError, ValueError):
    """A power or constant-modulus constraint is violated."""


class DegenerateError(HbfError, ArithmeticError):
    """A quantity that must be nonzero (precoder norm, channel) vanished."""


class NumericalError(HbfError, ArithmeticError):
    pass


class UsageError(HbfError, RuntimeError):
    pass


class IntegrityError(HbfError, IOError):
    """A container file failed its checksum or is truncated."""


class ParseError(HbfError, ValueError):
    pass


class EmptyResultError(HbfError, ValueError):
    pass
