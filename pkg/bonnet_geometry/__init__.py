"""
Bonnet Geometry
Minimal surfaces in S^3 from their normal curvature: sinh-Poisson solves,
frame reconstruction, associated families and type-number-two hypersurfaces
"""

__version__ = "0.1.0"
__author__ = "Bonnet Geometry Team"

from .config import Config
from .grid_core import Grid2D, ScalarField, VectorField, VectorField4
from .sinh_poisson import NormalCurvatureField, solve
from .surface_geometry import SurfaceS3, invariants
from .frame_integrator import reconstruct_surface
from .associated_family import build_family
from .hypersurface_builder import shape_spectrum

__all__ = [
    "Config",
    "Grid2D",
    "ScalarField",
    "VectorField",
    "VectorField4",
    "NormalCurvatureField",
    "solve",
    "SurfaceS3",
    "invariants",
    "reconstruct_surface",
    "build_family",
    "shape_spectrum",
]
