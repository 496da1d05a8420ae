"""Writers for CSV tables, run manifests and nuisance model records."""

import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Sequence, Union

import pandas as pd
import yaml

from ctdr.core.errors import CTDRError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
MISSING = "NA"

Rows = Union[pd.DataFrame, Iterable[Mapping[str, Any]]]


def ensure_directory(out_dir: Union[str, Path]) -> Path:
    """Create the output directory if needed and return it as a Path."""
    path = Path(out_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise CTDRError(
            f"Cannot create output directory {path}: {e}",
            suggestions=["Check directory permissions", "Choose another --out directory"],
            context={"path": str(path)},
        )
    return path


def write_table(rows: Rows, path: Union[str, Path], columns: Sequence[str]) -> Path:
    """
    Write a CSV table with a frozen column order.

    Floats use 17 significant digits and ``.`` as decimal separator; None
    and NaN become ``NA``. Lines end with ``\\n`` on every platform.

    Args:
        rows: DataFrame or iterable of row mappings
        path: Destination file
        columns: Header, in order; extra keys in ``rows`` are an error

    Returns:
        The written path
    """
    frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows))
    if frame.empty and not len(frame.columns):
        frame = pd.DataFrame(columns=list(columns))
    extra = [c for c in frame.columns if c not in columns]
    if extra:
        raise CTDRError(f"unexpected columns for {Path(path).name}: {extra}")
    frame = frame.reindex(columns=list(columns))

    target = Path(path)
    try:
        frame.to_csv(
            target,
            index=False,
            float_format=FLOAT_FORMAT,
            na_rep=MISSING,
            lineterminator="\n",
        )
    except OSError as e:
        raise CTDRError(
            f"Failed to write {target}: {e}",
            suggestions=["Check directory permissions", "Ensure sufficient disk space"],
        )
    logger.debug("wrote %d rows to %s", len(frame), target)
    return target


def _dump_yaml(data: Mapping[str, Any], path: Union[str, Path]) -> Path:
    target = Path(path)
    try:
        with open(target, "w", encoding="utf-8", newline="\n") as f:
            yaml.safe_dump(dict(data), f, sort_keys=True, default_flow_style=False)
    except OSError as e:
        raise CTDRError(
            f"Failed to write {target}: {e}",
            suggestions=["Check directory permissions", "Ensure sufficient disk space"],
        )
    return target


def write_manifest(manifest: Mapping[str, Any], path: Union[str, Path]) -> Path:
    """Write the run manifest as YAML with sorted keys."""
    return _dump_yaml(manifest, path)


def write_model_records(records: Dict[str, Mapping[str, Any]], path: Union[str, Path]) -> Path:
    """Write named ``ConditionalHazardModel.to_record()`` structures as YAML."""
    return _dump_yaml({name: dict(record) for name, record in records.items()}, path)


def read_model_records(path: Union[str, Path]) -> Dict[str, Dict[str, Any]]:
    """Read back what ``write_model_records`` wrote."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as e:
        raise CTDRError(f"Failed to read model records from {path}: {e}")
    return {str(name): dict(record) for name, record in data.items()}
