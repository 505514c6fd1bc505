"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operands have incompatible shapes or lengths."""


class FormatError(ValueError):
    """An input file does not follow its documented format."""


class NumericError(RuntimeError):
    """A computation produced a non-finite value."""
