"""Version information for ctdr."""

from importlib import metadata
from typing import Any, Dict, Tuple

import ctdr


class Version:
    """Version information read from the installed distribution."""

    DISTRIBUTION = "ctdr"

    @classmethod
    def get_version(cls) -> str:
        """
        Get the semantic version string.

        Falls back to ``ctdr.__version__`` when running from a source tree
        that was never installed.

        Returns:
            Version string in format MAJOR.MINOR.PATCH
        """
        try:
            return metadata.version(cls.DISTRIBUTION)
        except metadata.PackageNotFoundError:
            return ctdr.__version__

    @classmethod
    def _components(cls) -> Tuple[int, int, int]:
        core = cls.get_version().split("+")[0].split("-")[0]
        parts = (core.split(".") + ["0", "0", "0"])[:3]
        return int(parts[0]), int(parts[1]), int(parts[2])

    @classmethod
    def get_version_info(cls) -> Dict[str, Any]:
        """
        Get detailed version information.

        Returns:
            Dictionary containing version components, recorded in run manifests
        """
        major, minor, patch = cls._components()
        return {
            "version": cls.get_version(),
            "major": major,
            "minor": minor,
            "patch": patch,
        }
