"""Exception types shared across the package."""


class FixedDgError(Exception):
    """Base class for all package errors."""


class ShapeError(FixedDgError):
    """Operand shapes are invalid for an operation."""

    def __init__(self, op: str, message: str):
        self.op = op
        super().__init__(f"{op}: {message}")


class ConfigError(FixedDgError):
    """Invalid configuration value or unknown configuration key."""


class NumericsError(FixedDgError):
    """Non-finite value encountered where finiteness is required."""


class DataError(FixedDgError):
    """Invalid dataset contents or unparseable data file."""


class DegenerateBoundaryError(FixedDgError):
    """Two classes share identical score functions; no decision boundary exists."""


class TrainingDiverged(FixedDgError):
    """A training run produced a non-finite loss; carries epoch/step context."""

    def __init__(self, epoch: int, step: int, detail: str):
        self.epoch = epoch
        self.step = step
        super().__init__(f"training diverged at epoch {epoch}, step {step}: {detail}")
