"""
Utility package
Errors, JSON helpers and file helpers shared across the pipelines
"""

from .error_utils import (
    BonnetError,
    ConfigError,
    DegenerateEnvelopeError,
    DimensionError,
    DomainError,
    GateError,
    InstabilityError,
    LinearAlgebraError,
    NonConvergenceError,
    PrincipalNetError,
    ProjectionError,
    RegularityError,
    SeparabilityError,
    SingularityError,
    StepFailureError,
    handle_exception,
)
from .file_utils import ensure_output_dir, get_file_hash, validate_input_paths
from .json_utils import (
    convert_arrays_to_lists,
    dumps_deterministic,
    read_json,
    safe_json_serialize,
    write_json,
)

__all__ = [
    "BonnetError",
    "ConfigError",
    "DegenerateEnvelopeError",
    "DimensionError",
    "DomainError",
    "GateError",
    "InstabilityError",
    "LinearAlgebraError",
    "NonConvergenceError",
    "PrincipalNetError",
    "ProjectionError",
    "RegularityError",
    "SeparabilityError",
    "SingularityError",
    "StepFailureError",
    "handle_exception",
    "ensure_output_dir",
    "get_file_hash",
    "validate_input_paths",
    "convert_arrays_to_lists",
    "dumps_deterministic",
    "read_json",
    "safe_json_serialize",
    "write_json",
]
