"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid grid, parameters or run configuration."""


class GridMismatchError(ValueError):
    """Fields or operators defined on different grids were combined."""


class BlowUpError(RuntimeError):
    """Non-finite values appeared during time stepping."""

    def __init__(self, step: int, what: str = "state"):
        super().__init__(f"non-finite {what} at step {step}")
        self.step = step


class SnapshotError(ValueError):
    """Malformed, truncated or incompatible snapshot file."""
