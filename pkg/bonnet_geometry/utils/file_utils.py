"""
File utilities module
Path validation and content hashing for report provenance
"""

import hashlib
import logging
import os
from pathlib import Path
from typing import Iterable, Optional

from .error_utils import ConfigError

logger = logging.getLogger(__name__)


def get_file_hash(file_path: str) -> Optional[str]:
    """
    Compute the SHA-256 digest of a file

    Args:
        file_path: File path

    Returns:
        Hex digest, or None if the file cannot be read
    """
    try:
        hasher = hashlib.sha256()
        with open(file_path, "rb") as f:
            for chunk in iter(lambda: f.read(65536), b""):
                hasher.update(chunk)
        return hasher.hexdigest()
    except Exception as e:
        logger.error(f"Failed to hash file {file_path}: {str(e)}")
        return None


def validate_input_paths(paths: Iterable[Optional[str]]) -> None:
    """
    Check that every given input path exists and is a regular file

    Args:
        paths: Input paths; None entries are skipped

    Raises:
        ConfigError: If a path is missing
    """
    for path in paths:
        if path is None:
            continue
        if not os.path.isfile(path):
            raise ConfigError(f"Input file not found: {path}", {"path": str(path)})


def ensure_output_dir(path: str) -> Path:
    """
    Create the parent directory of an output file if needed

    Args:
        path: Output file path

    Returns:
        The output path as a Path
    """
    out = Path(path)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    return out
