"""Exception hierarchy."""

from __future__ import annotations

from typing import TYPE_CHECKING, List, Optional

if TYPE_CHECKING:
    from .objective import Violation


class SlicePlacementError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ConfigError(SlicePlacementError, ValueError):
    """Invalid or unknown configuration."""

    exit_code = 2


class StructuralError(SlicePlacementError, IndexError):
    """A mapping refers to nodes, links or VNFs that do not exist."""

    exit_code = 5


class ContractError(SlicePlacementError):
    """An operation was called outside of its preconditions."""

    exit_code = 5


class ReleaseError(SlicePlacementError):
    """Releasing a mapping that is not currently allocated."""

    exit_code = 5


class RejectionError(SlicePlacementError):
    """A mapping does not fit within the current residual capacities."""

    def __init__(self, violations: "List[Violation]") -> None:
        self.violations = list(violations)
        summary = ", ".join(
            f"{v.kind.value}@{v.subject}(-{v.deficit})" for v in self.violations
        )
        super().__init__(f"Mapping rejected: {summary}")


class NumericalError(SlicePlacementError, ArithmeticError):
    """Non-finite logits, losses or gradients."""

    exit_code = 4


class NoActionError(SlicePlacementError):
    """Sampling from a distribution without eligible actions."""


class _LineError(SlicePlacementError):
    exit_code = 3

    def __init__(self, message: str, line_number: Optional[int] = None) -> None:
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class FixtureParseError(_LineError):
    """Malformed line-oriented fixture text."""


class ReportParseError(_LineError):
    """Malformed metrics or timing CSV."""
