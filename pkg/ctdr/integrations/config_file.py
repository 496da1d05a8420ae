"""Reader for flat ``dotted.key=value`` study configuration files."""

import hashlib
from pathlib import Path
from typing import Dict, List

from ctdr.core.errors import ConfigurationError


class ConfigFile:
    """Handles reading and fingerprinting a ctdr study configuration."""

    def __init__(self, config_path: str):
        """
        Initialize the config file handler.

        Args:
            config_path: Path to the configuration file
        """
        self.config_path = Path(config_path)

    def _lines(self) -> List[str]:
        if not self.config_path.is_file():
            raise ConfigurationError(
                f"Config file not found: {self.config_path}",
                suggestions=[
                    "Check the path passed to --config",
                    "See configs/ for example study configurations",
                ],
                context={"path": str(self.config_path)},
            )
        try:
            return self.config_path.read_text(encoding="utf-8").splitlines()
        except (OSError, UnicodeDecodeError) as e:
            raise ConfigurationError(
                f"Failed to read config file: {e}",
                suggestions=["Check file permissions and encoding (UTF-8)"],
                context={"path": str(self.config_path)},
            )

    def read(self) -> Dict[str, str]:
        """
        Read the settings as raw strings.

        Blank lines and lines starting with ``#`` are skipped; text after an
        inline ``#`` is a comment too.

        Returns:
            Dictionary of dotted keys to values

        Raises:
            ConfigurationError: If the file is missing, unreadable, a line has
                no ``=`` or a key is repeated
        """
        config: Dict[str, str] = {}
        for number, raw_line in enumerate(self._lines(), start=1):
            line = raw_line.split("#", 1)[0].strip()
            if not line:
                continue

            if "=" not in line:
                raise ConfigurationError(
                    f"Line {number} is not of the form key=value: {raw_line.strip()!r}",
                    context={"line": number},
                )

            key, value = (part.strip() for part in line.split("=", 1))
            if not key:
                raise ConfigurationError(
                    f"Line {number} has an empty key", context={"line": number}
                )
            if key in config:
                raise ConfigurationError(
                    f"Key '{key}' is set more than once", context={"key": key, "line": number}
                )
            config[key] = value

        return config

    def digest(self) -> str:
        """
        64-bit fingerprint of the canonicalized settings.

        SHA-256 over the sorted ``key=value`` lines with whitespace and
        comments removed, truncated to its first 8 bytes.

        Returns:
            16 lowercase hex digits
        """
        canonical = "\n".join(f"{key}={value}" for key, value in sorted(self.read().items()))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
