"""
JSON Utilities Module

Converts numpy-bearing structures to JSON-compatible values and writes them
with a fixed layout so identical inputs give identical bytes.
"""

import json
from typing import Any

import numpy as np


def convert_arrays_to_lists(obj: Any) -> Any:
    """
    Recursively convert numpy arrays, numpy scalars, tuples and sets to plain
    Python values.

    Args:
        obj: The object to convert

    Returns:
        The converted object

    Examples:
        >>> convert_arrays_to_lists({'a': np.arange(2), 'b': (np.float64(1.5),)})
        {'a': [0, 1], 'b': [1.5]}
    """
    if isinstance(obj, dict):
        return {str(k): convert_arrays_to_lists(v) for k, v in obj.items()}
    elif isinstance(obj, np.ndarray):
        return convert_arrays_to_lists(obj.tolist())
    elif isinstance(obj, (list, tuple)):
        return [convert_arrays_to_lists(item) for item in obj]
    elif isinstance(obj, set):
        return [convert_arrays_to_lists(item) for item in sorted(obj)]
    elif isinstance(obj, np.bool_):
        return bool(obj)
    elif isinstance(obj, np.integer):
        return int(obj)
    elif isinstance(obj, np.floating):
        return float(obj)
    else:
        return obj


def safe_json_serialize(obj: Any) -> Any:
    """
    Safely serialize an object to a JSON-compatible structure.

    Args:
        obj: The object to serialize

    Returns:
        A JSON-compatible structure
    """
    return convert_arrays_to_lists(obj)


def dumps_deterministic(obj: Any) -> str:
    """
    Dump to JSON with sorted keys and a trailing newline.

    Args:
        obj: The object to dump

    Returns:
        JSON text
    """
    return json.dumps(safe_json_serialize(obj), indent=2, sort_keys=True) + "\n"


def write_json(path: str, obj: Any) -> None:
    """
    Write an object as deterministic JSON.

    Args:
        path: Output path
        obj: The object to write
    """
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps_deterministic(obj))


def read_json(path: str) -> Any:
    """
    Read a JSON document.

    Args:
        path: Input path

    Returns:
        Parsed document
    """
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
