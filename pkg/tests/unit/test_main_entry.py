"""Tests for __main__.py entry point."""

from pathlib import Path


class TestMainEntry:
    """Test the __main__.py entry point."""

    def test_main_function_is_imported_correctly(self) -> None:
        """Test that main function is imported from cli.main."""
        from ctdr.__main__ import main
        from ctdr.cli.main import main as cli_main

        assert main is cli_main

    def test_main_entry_structure(self) -> None:
        """Test that __main__.py exits with main()'s code under the guard."""
        import ctdr

        content = (Path(ctdr.__file__).parent / "__main__.py").read_text()

        assert "sys.exit(main())" in content
        assert 'if __name__ == "__main__"' in content
