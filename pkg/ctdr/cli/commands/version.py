"""Version command implementation."""

from ctdr.core.version import Version


class VersionCommand:
    """Handler for the version command."""

    @staticmethod
    def execute(verbose: bool = False) -> int:
        """
        Print the ctdr version, with its components when verbose.

        Returns:
            Exit code (0 for success)
        """
        print(f"ctdr version {Version.get_version()}")
        if verbose:
            info = Version.get_version_info()
            print(f"  major={info['major']} minor={info['minor']} patch={info['patch']}")
        return 0
