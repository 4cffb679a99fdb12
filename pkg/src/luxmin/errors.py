"""Exception types shared across the package."""


class LuxminError(Exception):
    """Base class for all package-specific errors."""


class NonAdmissibleExponent(LuxminError):
    """Exponent field violates the admissibility requirements (min <= 1 or non-finite)."""


class ZeroField(LuxminError):
    """An operation that requires a nonzero field received the zero field."""


class DegenerateField(LuxminError):
    """A field is too degenerate for the requested operation (e.g. vanishing gradient)."""


class ExprSyntaxError(LuxminError):
    """Malformed exponent expression.

    Attributes:
        offset: byte offset into the source string where parsing failed.
    """

    def __init__(self, message, offset):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class UnknownIdentifier(ExprSyntaxError):
    """Expression uses an identifier that is not x, y or a known function."""


class ConfigError(LuxminError):
    """Experiment configuration failed validation."""
