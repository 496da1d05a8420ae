"""Output formatting for the CLI."""

import sys
from pathlib import Path
from typing import List, Optional, Sequence

from ctdr.business.montecarlo_models import ScenarioReport


def _fmt(value: Optional[float], digits: int = 4) -> str:
    return "NA" if value is None else f"{value:.{digits}g}"


class OutputFormatter:
    """Human-readable progress and summaries; data goes to files."""

    def __init__(self, verbose: bool = False):
        """
        Initialize the output formatter.

        Args:
            verbose: Enable verbose output mode
        """
        self.verbose = verbose

    def info(self, message: str) -> None:
        print(message)

    def success(self, message: str) -> None:
        print(message)

    def warning(self, message: str) -> None:
        print(message, file=sys.stderr)

    def error(self, message: str, suggestions: Optional[List[str]] = None) -> None:
        """
        Print error message with optional suggestions.

        Args:
            message: Error message to print
            suggestions: Optional list of suggestions for resolving the error
        """
        print(message, file=sys.stderr)

        if suggestions:
            print("", file=sys.stderr)
            print("Suggestions:", file=sys.stderr)
            for suggestion in suggestions:
                print(f"  • {suggestion}", file=sys.stderr)

    def progress(self, message: str) -> None:
        """Print a progress message (only in verbose mode)."""
        if self.verbose:
            print(message)

    def scenario_summary(self, reports: Sequence[ScenarioReport]) -> None:
        """One line per Monte Carlo cell: bias, MCSE, coverage and failures."""
        for report in reports:
            self.info(
                f"  {report.cell}: n={report.n} R={report.replications} "
                f"bias={_fmt(report.bias)} mcse={_fmt(report.mcse)} "
                f"coverage={_fmt(report.coverage, 3)} failures={report.failures}"
            )

    def outputs_written(self, paths: Sequence[Path]) -> None:
        """List the files a command produced."""
        self.success(f"Wrote {len(paths)} file(s):")
        for path in paths:
            self.info(f"  {path}")
