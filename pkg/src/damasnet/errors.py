"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An argument is outside its valid domain."""


class DegenerateGeometryError(ValueError):
    """A source or grid point coincides with a microphone."""


class NumericalError(ArithmeticError):
    """A computation produced non-finite or inconsistent values."""


class FormatError(ValueError):
    """A binary or text file does not match its expected layout."""
