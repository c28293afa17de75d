"""Exception types shared across the package."""


class MidframeError(Exception):
    """Base class for package errors."""


class ConfigError(MidframeError):
    """Invalid configuration value or unknown configuration key."""


class ShapeError(MidframeError, ValueError):
    """Array arguments have incompatible shapes."""


class EventBoundsError(MidframeError, ValueError):
    """An event lies outside the sensor plane.

    Carries the index of the first offending event.
    """

    def __init__(self, index: int, message: str):
        super().__init__(message)
        self.index = index


class TrainingDiverged(MidframeError, RuntimeError):
    """Training produced a non-finite loss; carries diagnostics."""

    def __init__(self, step: int, diagnostics: dict):
        super().__init__(f"non-finite loss at step {step}: {diagnostics}")
        self.step = step
        self.diagnostics = diagnostics


class CheckpointError(MidframeError):
    """Checkpoint missing, malformed, or of an unexpected version."""
