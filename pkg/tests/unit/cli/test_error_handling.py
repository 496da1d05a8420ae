"""Tests for CLI error handling."""

import click
import pytest

from ctdr.cli.commands.common import SEED, safe_command_execution
from ctdr.core.errors import (
    ConfigurationError,
    ExitCode,
    PositivityError,
    ScenarioError,
)


class TestSafeCommandExecution:
    """Tests for the safe_command_execution decorator."""

    def test_successful_command_execution(self) -> None:
        """Test that successful commands return normally."""

        @safe_command_execution
        def success_command():
            return 0

        assert success_command() == 0

    def test_keyboard_interrupt_handling(self) -> None:
        """Test that KeyboardInterrupt is handled gracefully."""

        @safe_command_execution
        def interrupted_command():
            raise KeyboardInterrupt()

        with pytest.raises(SystemExit) as exc_info:
            interrupted_command()

        assert exc_info.value.code == ExitCode.KEYBOARD_INTERRUPT.value

    @pytest.mark.parametrize(
        "error,code",
        [
            (ConfigurationError("missing required key 'dgp.scenario'"), 2),
            (ScenarioError("too many failures"), 3),
            (PositivityError("K below floor", context={"fold": 2, "observation": 17}), 5),
        ],
    )
    def test_ctdr_error_handling(
        self, error: Exception, code: int, capsys: pytest.CaptureFixture
    ) -> None:
        """Test ctdr errors exit with their code and a CTDR-E prefix."""

        @safe_command_execution
        def error_command():
            raise error

        with pytest.raises(SystemExit) as exc_info:
            error_command()

        assert exc_info.value.code == code
        assert capsys.readouterr().err.startswith(f"CTDR-E{code}: ")

    def test_context_is_rendered(self, capsys: pytest.CaptureFixture) -> None:
        """Test fold and observation tags appear in the message."""

        @safe_command_execution
        def error_command():
            raise PositivityError("K below floor", context={"fold": 2, "observation": 17})

        with pytest.raises(SystemExit):
            error_command()

        assert "[fold=2, observation=17]" in capsys.readouterr().err

    def test_click_exception_handling(self) -> None:
        """Test that Click exceptions are re-raised."""

        @safe_command_execution
        def click_error_command():
            raise click.ClickException("Click error")

        with pytest.raises(click.ClickException):
            click_error_command()

    def test_unexpected_exception_handling(self, capsys: pytest.CaptureFixture) -> None:
        """Test that unexpected exceptions exit 1."""

        @safe_command_execution
        def bad_command():
            raise ValueError("Unexpected")

        with pytest.raises(SystemExit) as exc_info:
            bad_command()

        assert exc_info.value.code == ExitCode.GENERAL_ERROR.value
        assert "CTDR-E1: Unexpected error: Unexpected" in capsys.readouterr().err


class TestSeedParamType:
    """Tests for the u64 seed parameter."""

    @pytest.mark.parametrize(
        "raw,expected",
        [("0", 0), ("20240101", 20240101), ("0x2A", 42), ("18446744073709551615", 2**64 - 1)],
    )
    def test_accepts_u64(self, raw: str, expected: int) -> None:
        """Test decimal and hexadecimal seeds."""
        assert SEED.convert(raw, None, None) == expected

    @pytest.mark.parametrize("raw", ["-1", "18446744073709551616", "seed", "1.5"])
    def test_rejects_others(self, raw: str) -> None:
        """Test values outside u64 are usage errors."""
        with pytest.raises(click.BadParameter):
            SEED.convert(raw, None, None)
