"""Shared exception types."""

__all__ = ["ReconstructionFailure", "ConfigError"]


class ReconstructionFailure(Exception):
    """A reconstruction driver could not complete; carries diagnostics."""

    def __init__(self, message: str, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class ConfigError(ValueError):
    """Invalid experiment configuration; message lists field paths."""
