"""Exception hierarchy shared across the package."""


class DlarchError(Exception):
    """Base class for every error raised by dlarch."""


class ValidationError(DlarchError, ValueError):
    """Bad user input: shapes, config values, class indices, file contents."""


class ShapeError(ValidationError):
    pass


class GraphError(DlarchError, RuntimeError):
    """Misuse of the autodiff graph (double backward, missing grads)."""
