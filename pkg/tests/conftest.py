"""
Shared fixtures: grids, a solved strongly regular normal-curvature field and
analytic surfaces
"""

import numpy as np
import pytest

from bonnet_geometry.grid_core import Grid2D, ScalarField
from bonnet_geometry.sinh_poisson import NormalCurvatureField, solve
from bonnet_geometry.surface_geometry import clifford_torus

# Boundary data whose gradient is never parallel to an axis, so every
# rotation by a multiple of pi/4 stays strongly regular
BOUNDARY_ANGLE = np.pi / 8


@pytest.fixture
def unit_grid():
    return Grid2D(0.0, 1.0, 0.0, 1.0, 33, 33)


@pytest.fixture
def clifford_grid():
    return Grid2D(-1.0, 1.0, -1.0, 1.0, 65, 65)


@pytest.fixture
def clifford(clifford_grid):
    return clifford_torus(clifford_grid)


def linear_boundary(grid: Grid2D) -> ScalarField:
    c, s = np.cos(BOUNDARY_ANGLE), np.sin(BOUNDARY_ANGLE)
    return ScalarField.from_function(grid, lambda u, v: c * u + s * v)


def solve_regular(nodes: int, half_width: float = 0.15) -> NormalCurvatureField:
    grid = Grid2D(-half_width, half_width, -half_width, half_width, nodes, nodes)
    return solve(linear_boundary(grid), tol=1e-11).nu


@pytest.fixture(scope="session")
def regular_nu():
    """Strongly regular solution on [-0.15, 0.15]^2, 31 x 31 nodes"""
    return solve_regular(31)


@pytest.fixture
def constant_nu():
    return NormalCurvatureField.constant(Grid2D(-0.5, 0.5, -0.5, 0.5, 101, 101), 1.0)
