"""Exception types shared across the lab.

Configuration problems are ``ValueError`` subclasses and runtime aborts are
``RuntimeError`` subclasses, so callers that only know the builtins still work.
The CLI maps the first family to exit code 2 and the second to exit code 3.
"""

from __future__ import annotations


class ConfigurationError(ValueError):
    """Parameters or geometry that no experiment can run with."""


class SimulationAbort(RuntimeError):
    """A running experiment had to stop."""


class RejectionFloorError(SimulationAbort):
    """Rejection sampling fell below its acceptance floor."""

    def __init__(self, message: str, walker: int | None = None, acceptance: float | None = None):
        super().__init__(message)
        self.walker = walker
        self.acceptance = acceptance


class BudgetExceededError(SimulationAbort):
    """A cell classification would exceed its simulation budget."""
