"""Exception hierarchy shared across catmix."""


class CatMixError(Exception):
    """Base class for all catmix errors."""


class ValidationError(CatMixError, ValueError):
    """Input data violates a structural requirement."""


class ParseError(ValidationError):
    """A cell in an input file could not be read as a category index."""

    def __init__(self, row, col, value, path=None):
        self.row = row
        self.col = col
        self.value = value
        self.path = path
        where = f"{path}: " if path else ""
        super().__init__(f"{where}row {row}, column {col}: cannot parse {value!r} as a non-negative integer")


class DesignError(ValidationError):
    """Inconsistent simulation design."""


class ConfigError(ValidationError):
    """Invalid model or run configuration."""


class InputError(ValidationError):
    """Mismatched or insufficient inputs to a summarisation routine."""


class NumericalError(CatMixError, ArithmeticError):
    """A non-finite value appeared during fitting or evaluation."""

    def __init__(self, message, iteration=None, term=None):
        self.iteration = iteration
        self.term = term
        parts = [message]
        if term is not None:
            parts.append(f"term={term}")
        if iteration is not None:
            parts.append(f"iteration={iteration}")
        super().__init__(", ".join(parts))


class DegenerateError(CatMixError, ValueError):
    """A statistic is undefined because an input series has zero variance."""
