"""Tests for output formatter."""

from io import StringIO
from pathlib import Path
from unittest.mock import patch

from ctdr.business.montecarlo_models import ScenarioReport
from ctdr.cli.output import OutputFormatter


class TestOutputFormatter:
    """Tests for OutputFormatter class."""

    def test_info(self) -> None:
        """Test info output method."""
        formatter = OutputFormatter()
        with patch("sys.stdout", new=StringIO()) as fake_out:
            formatter.info("Information message")
            assert "Information message" in fake_out.getvalue()

    def test_warning(self) -> None:
        """Test warnings go to stderr."""
        formatter = OutputFormatter()
        with patch("sys.stderr", new=StringIO()) as fake_err:
            formatter.warning("Warning message")
            assert "Warning message" in fake_err.getvalue()

    def test_error_with_suggestions(self) -> None:
        """Test error output with suggestions."""
        formatter = OutputFormatter()
        with patch("sys.stderr", new=StringIO()) as fake_err:
            formatter.error("Error occurred", ["Try this", "Or that"])
            output = fake_err.getvalue()
            assert "Suggestions:" in output
            assert "Try this" in output

    def test_error_without_suggestions(self) -> None:
        """Test error output without suggestions."""
        formatter = OutputFormatter()
        with patch("sys.stderr", new=StringIO()) as fake_err:
            formatter.error("Error occurred")
            assert "Suggestions:" not in fake_err.getvalue()

    def test_progress_in_normal_mode(self) -> None:
        """Test progress is silent unless verbose."""
        with patch("sys.stdout", new=StringIO()) as fake_out:
            OutputFormatter(verbose=False).progress("step")
            assert fake_out.getvalue() == ""

    def test_progress_in_verbose_mode(self) -> None:
        """Test progress prints in verbose mode."""
        with patch("sys.stdout", new=StringIO()) as fake_out:
            OutputFormatter(verbose=True).progress("step")
            assert "step" in fake_out.getvalue()

    def test_scenario_summary(self) -> None:
        """Test one line per cell with NA for absent values."""
        report = ScenarioReport("correct/correct", 500, 1, 0.5, 0.0012, None, 0.02, 1.0, None, 0)
        with patch("sys.stdout", new=StringIO()) as fake_out:
            OutputFormatter().scenario_summary([report])
            output = fake_out.getvalue()
        assert "correct/correct: n=500 R=1" in output
        assert "mcse=NA" in output

    def test_outputs_written(self) -> None:
        """Test the produced files are listed."""
        with patch("sys.stdout", new=StringIO()) as fake_out:
            OutputFormatter().outputs_written([Path("out/report.csv"), Path("out/manifest.yaml")])
            output = fake_out.getvalue()
        assert "Wrote 2 file(s):" in output
        assert "report.csv" in output
