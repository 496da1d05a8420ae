"""Error handling and exception definitions for ctdr."""

from enum import Enum
from typing import Any, Dict, List, Optional


class ExitCode(Enum):
    """Standard exit codes for the CLI."""

    SUCCESS = 0
    GENERAL_ERROR = 1
    CONFIGURATION_ERROR = 2
    SCENARIO_ERROR = 3
    VALIDATION_ERROR = 4
    ESTIMATION_ERROR = 5
    CONSISTENCY_ERROR = 6
    KEYBOARD_INTERRUPT = 130


class CTDRError(Exception):
    """Base exception for all ctdr errors."""

    exit_code: ExitCode = ExitCode.GENERAL_ERROR

    def __init__(
        self,
        message: str,
        suggestions: Optional[List[str]] = None,
        context: Optional[Dict[str, Any]] = None,
    ):
        """
        Initialize CTDRError.

        Args:
            message: Error message describing what went wrong
            suggestions: List of suggestions for resolving the error
            context: Structured details (fold index, observation index, ...)
        """
        self.message = message
        self.suggestions = suggestions or []
        self.context: Dict[str, Any] = dict(context or {})
        super().__init__(self.message)

    @property
    def code(self) -> int:
        """Numeric code used in the machine-parsable prefix."""
        return self.exit_code.value

    def format_error(self) -> str:
        """
        Format error message with context and suggestions.

        Returns:
            Formatted error message string starting with ``CTDR-E<code>:``
        """
        message = self.message
        tags = {k: v for k, v in self.context.items() if k != "trace"}
        if tags:
            rendered = ", ".join(f"{key}={tags[key]}" for key in sorted(tags))
            message = f"{message} [{rendered}]"
        lines = [f"CTDR-E{self.code}: {message}"]

        if self.suggestions:
            lines.append("")
            lines.append("Suggestions:")
            for suggestion in self.suggestions:
                lines.append(f"  • {suggestion}")

        return "\n".join(lines)


class ConfigurationError(CTDRError):
    """Raised when a study configuration is missing keys or invalid."""

    exit_code = ExitCode.CONFIGURATION_ERROR


class ScenarioError(CTDRError):
    """Raised when too many Monte Carlo replications fail."""

    exit_code = ExitCode.SCENARIO_ERROR


class ValidationError(CTDRError):
    """Raised when input validation fails."""

    exit_code = ExitCode.VALIDATION_ERROR


class DomainError(ValidationError):
    """Raised when an operation leaves its mathematical domain."""

    pass


class EstimationError(CTDRError):
    """Base class for failures while fitting or solving."""

    exit_code = ExitCode.ESTIMATION_ERROR


class FittingError(EstimationError):
    """Raised when a nuisance model cannot be fitted."""

    pass


class PositivityError(EstimationError):
    """Raised when an inverse weight denominator falls below the floor."""

    pass


class SolverError(EstimationError):
    """Raised when the estimating equation cannot be solved."""

    pass


class ConsistencyError(CTDRError):
    """Raised when an internal algebraic identity does not hold."""

    exit_code = ExitCode.CONSISTENCY_ERROR
