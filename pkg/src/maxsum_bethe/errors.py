"""Exception types shared across the package."""


class ModelError(ValueError):
    """Invalid model, assignment, or argument shape."""


class ModelFormatError(ModelError):
    """A model file failed validation. ``line`` points into the source text."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CapacityError(RuntimeError):
    """Brute-force enumeration would exceed the configured cap."""


class DegenerateModelError(ModelError):
    """Every joint assignment has energy -inf."""
