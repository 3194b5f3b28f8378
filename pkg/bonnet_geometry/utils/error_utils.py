"""
Error handling utilities module
Provides the exception hierarchy shared by every pipeline and the structured
error record written by the command line front door
"""

import logging
import traceback
from typing import Any, Dict, Optional

logger = logging.getLogger(__name__)


class BonnetError(Exception):
    """Base exception class for bonnet-geometry errors"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        """
        Initialize the exception

        Args:
            message: Error message
            details: Additional error details (node locations, measured values)
        """
        self.message = message
        self.details = details or {}
        super().__init__(message)

    def to_dict(self) -> Dict[str, Any]:
        """
        Convert the exception to a dictionary

        Returns:
            Dictionary representation of the exception
        """
        return {
            "error_type": self.__class__.__name__,
            "message": self.message,
            "details": self.details,
        }


class DimensionError(BonnetError):
    """Raised when a grid is too small for a stencil or shapes disagree"""
    pass


class DomainError(BonnetError):
    """Raised when an input leaves the domain of an operation (e.g. nu <= 0)"""
    pass


class RegularityError(BonnetError):
    """Raised for rank-deficient tangent spaces"""
    pass


class PrincipalNetError(BonnetError):
    """Raised when the parametric net is not a principal net"""
    pass


class SingularityError(BonnetError):
    """Raised at umbilic nodes where a formula divides by nu1 - nu2"""
    pass


class SeparabilityError(BonnetError):
    """Raised when canonical parameter integrands depend on the wrong variable"""
    pass


class NonConvergenceError(BonnetError):
    """Raised when an iterative solver exhausts its iteration budget"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None,
                 best_iterate: Any = None, history: Optional[list] = None):
        super().__init__(message, details)
        self.best_iterate = best_iterate
        self.history = history or []


class LinearAlgebraError(BonnetError):
    """Raised when a linear solve fails"""
    pass


class StepFailureError(BonnetError):
    """Raised when an integration step drifts too far from SO(4)"""
    pass


class GateError(BonnetError):
    """Raised when a residual gate rejects an input before computation"""
    pass


class DegenerateEnvelopeError(BonnetError):
    """Raised when W^2 = EG - F^2 vanishes on an envelope chart"""
    pass


class InstabilityError(BonnetError):
    """Raised when eigen-direction fields cannot be followed (eigenvalue crossing)"""
    pass


class ProjectionError(BonnetError):
    """Raised when a mesh node sits on the projection pole"""
    pass


class ConfigError(BonnetError):
    """Raised for configuration and input-file errors"""
    pass


def handle_exception(exception: Exception, component: Optional[str] = None) -> Dict[str, Any]:
    """
    Handle an exception and return a standardized error record

    Args:
        exception: The exception to handle
        component: The component where the exception occurred

    Returns:
        Standardized error record dictionary
    """
    error_type = type(exception).__name__
    error_message = str(exception)

    logger.error(f"Error in {component or 'unknown'}: {error_type}: {error_message}")
    logger.debug(traceback.format_exc())

    error_response = {
        "error": True,
        "error_type": error_type,
        "message": error_message,
        "component": component,
    }

    if isinstance(exception, BonnetError):
        error_response["details"] = exception.details

    return error_response

