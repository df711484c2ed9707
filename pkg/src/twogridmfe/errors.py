from __future__ import annotations

from collections.abc import Sequence
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .msolve import RunReport


class TwoGridError(Exception):
    """Base exception for all solver errors."""


class InvalidArgumentError(TwoGridError, ValueError):
    """Custom exception for arguments outside their admissible range."""


class OutOfDomainError(InvalidArgumentError):
    """Raised when a point lies outside the closed mesh domain."""


class LinearSolverError(TwoGridError):
    """Raised when a linear solve fails or misses its residual bound."""

    def __init__(self, message: str, residual: float = float("nan")) -> None:
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class NewtonConvergenceError(TwoGridError):
    """Raised when Newton's method does not reach the residual tolerance."""

    def __init__(self, step: int, residual_history: Sequence[float]) -> None:
        last = residual_history[-1] if residual_history else float("nan")
        super().__init__(
            f"Newton iteration did not converge at step {step} after {len(residual_history) - 1} "
            f"iterations (last residual={last:.3e})"
        )
        self.step = step
        self.residual_history = list(residual_history)


class StepFailureError(TwoGridError):
    """Raised by a run driver when a time step fails. Carries the partial report."""

    def __init__(self, message: str, report: RunReport) -> None:
        super().__init__(message)
        self.report = report


class ConfigError(TwoGridError):
    """Custom exception for malformed experiment configurations."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None) -> None:
        location = ""
        if field is not None:
            location += f"field '{field}'"
        if line is not None:
            location += f" (line {line})" if location else f"line {line}"
        super().__init__(f"{location}: {message}" if location else message)
        self.field = field
        self.line = line
