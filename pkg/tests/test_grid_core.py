"""
Grid core tests
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bonnet_geometry.grid_core import (
    FieldInterpolant,
    Grid2D,
    ScalarField,
    VectorField,
    derivative_mask,
    field_from_dict,
    field_from_expression,
    field_to_dict,
    integrate_along_u,
    integrate_along_v,
    laplacian,
    partial_u,
    partial_uu,
    partial_uv,
    partial_v,
    partial_vv,
    resample,
    sample_points,
    write_field_csv,
)
from bonnet_geometry.utils.error_utils import ConfigError, DimensionError, DomainError


class TestGrid2D:
    def test_spacing_and_mesh(self, unit_grid):
        assert unit_grid.hu == pytest.approx(1.0 / 32)
        U, V = unit_grid.mesh()
        assert U.shape == (33, 33)
        assert U[5, 0] == pytest.approx(5.0 / 32)
        assert V[0, 7] == pytest.approx(7.0 / 32)

    def test_two_nodes_allowed(self):
        grid = Grid2D(0.0, 1.0, 0.0, 1.0, 2, 2)
        assert grid.shape == (2, 2)

    def test_one_node_rejected(self):
        with pytest.raises(DimensionError):
            Grid2D(0.0, 1.0, 0.0, 1.0, 1, 5)

    def test_inverted_bounds_rejected(self):
        with pytest.raises(DomainError):
            Grid2D(1.0, 0.0, 0.0, 1.0, 5, 5)

    def test_window_round_trip(self, unit_grid):
        window = unit_grid.window(4, 20, 2, 30)
        su, sv = unit_grid.window_slices(window)
        assert (su.start, su.stop, sv.start, sv.stop) == (4, 21, 2, 31)
        assert window.hu == pytest.approx(unit_grid.hu)

    def test_parse(self):
        grid = Grid2D.parse("0, 2, -1, 1, 5, 9")
        assert grid == Grid2D(0.0, 2.0, -1.0, 1.0, 5, 9)
        with pytest.raises(ConfigError):
            Grid2D.parse("0,1,0,1,5")

    def test_interior_mask(self):
        grid = Grid2D(0.0, 1.0, 0.0, 1.0, 6, 7)
        mask = grid.interior_mask(2)
        assert mask.sum() == (6 - 4) * (7 - 4)
        assert not mask[1, 3]


class TestFields:
    def test_non_finite_rejected(self, unit_grid):
        values = np.zeros(unit_grid.shape)
        values[3, 4] = np.nan
        with pytest.raises(DomainError) as info:
            ScalarField(unit_grid, values)
        assert info.value.details["node"] == [3, 4]

    def test_shape_mismatch_rejected(self, unit_grid):
        with pytest.raises(DimensionError):
            ScalarField(unit_grid, np.zeros((4, 4)))

    def test_values_are_read_only(self, unit_grid):
        field = ScalarField.constant(unit_grid, 1.0)
        with pytest.raises(ValueError):
            field.values[0, 0] = 2.0


class TestDifferences:
    def test_quadratic_is_exact(self, unit_grid):
        f = ScalarField.from_function(unit_grid, lambda u, v: u ** 2 + 3.0 * u * v - 2.0 * v ** 2)
        U, V = unit_grid.mesh()
        np.testing.assert_allclose(partial_u(f).values, 2.0 * U + 3.0 * V, atol=1e-10)
        np.testing.assert_allclose(partial_v(f).values, 3.0 * U - 4.0 * V, atol=1e-10)
        np.testing.assert_allclose(partial_uu(f).values, 2.0, atol=1e-8)
        np.testing.assert_allclose(partial_vv(f).values, -4.0, atol=1e-8)
        np.testing.assert_allclose(partial_uv(f).values, 3.0, atol=1e-8)

    def test_second_order_convergence(self):
        errors = []
        for n in (17, 33, 65):
            grid = Grid2D(0.0, 1.0, 0.0, 1.0, n, n)
            f = ScalarField.from_function(grid, lambda u, v: np.sin(2.0 * u) * np.cos(v))
            U, V = grid.mesh()
            errors.append(np.max(np.abs(partial_u(f).values - 2.0 * np.cos(2.0 * U) * np.cos(V))))
        assert 3.5 < errors[0] / errors[1] < 4.5
        assert 3.5 < errors[1] / errors[2] < 4.5

    def test_laplacian_masks_boundary(self, unit_grid):
        f = ScalarField.from_function(unit_grid, lambda u, v: u ** 2 + v ** 2)
        lap = laplacian(f)
        assert not lap.valid[0, 5]
        assert lap.values[0, 5] == 0.0
        assert lap.max_abs() == pytest.approx(4.0)
        np.testing.assert_allclose(lap.masked(), 4.0, atol=1e-8)

    def test_nested_differences_peel_boundary_rings(self, unit_grid):
        f = ScalarField.from_function(unit_grid, lambda u, v: u * v)
        du = partial_u(f)
        assert not du.valid[0, 5] and not du.valid[32, 5]
        assert du.valid[1, 0] and du.valid[1, 32]
        duu = partial_u(du)
        assert not duu.valid[1, 5] and duu.valid[2, 5]
        np.testing.assert_array_equal(partial_v(du).valid, unit_grid.interior_mask(1))

    def test_derivative_mask_spreads_holes(self):
        valid = np.ones((7, 7), dtype=bool)
        valid[3, 3] = False
        eroded = derivative_mask(valid, 1)
        assert not eroded[3, 2] and not eroded[3, 4]
        assert eroded[2, 3]
        assert not eroded[:, 0].any() and not eroded[:, 6].any()

    def test_too_few_nodes(self):
        grid = Grid2D(0.0, 1.0, 0.0, 1.0, 2, 5)
        with pytest.raises(DimensionError):
            partial_u(ScalarField.constant(grid, 1.0))

    def test_vector_field_derivative(self, unit_grid):
        field = VectorField.from_function(unit_grid, lambda u, v: np.stack([u, v, u * v], axis=-1))
        du = partial_u(field)
        assert isinstance(du, VectorField)
        U, V = unit_grid.mesh()
        np.testing.assert_allclose(du.values[..., 2], V, atol=1e-12)

    @given(a=st.floats(-3, 3), b=st.floats(-3, 3))
    @settings(max_examples=25, deadline=None)
    def test_partial_u_is_linear(self, a, b):
        grid = Grid2D(0.0, 1.0, 0.0, 1.0, 9, 9)
        f = ScalarField.from_function(grid, lambda u, v: np.sin(u + 2.0 * v))
        g = ScalarField.from_function(grid, lambda u, v: np.exp(u) * v)
        combined = ScalarField(grid, a * f.values + b * g.values)
        expected = a * partial_u(f).values + b * partial_u(g).values
        np.testing.assert_allclose(partial_u(combined).values, expected, atol=1e-9)


class TestIntegration:
    def test_integrate_along_u(self, unit_grid):
        f = ScalarField.from_function(unit_grid, lambda u, v: 2.0 * u + 0.0 * v)
        result = integrate_along_u(f, v_index=3, u0_index=16)
        assert result.shape == (33,)
        np.testing.assert_allclose(result, unit_grid.u ** 2 - 0.25, atol=1e-3)
        assert result[16] == 0.0

    def test_integrate_along_v(self, unit_grid):
        f = ScalarField.constant(unit_grid, 3.0)
        result = integrate_along_v(f, u_index=0, v0_index=0)
        np.testing.assert_allclose(result, 3.0 * unit_grid.v, atol=1e-12)

    def test_index_out_of_range(self, unit_grid):
        with pytest.raises(DimensionError):
            integrate_along_u(ScalarField.constant(unit_grid, 1.0), v_index=40, u0_index=0)


class TestResampling:
    def test_cubic_is_reproduced(self, unit_grid):
        f = ScalarField.from_function(unit_grid, lambda u, v: u ** 3 - u * v ** 2)
        uq = np.array([0.1234, 0.5, 0.9])
        vq = np.array([0.77, 0.31, 0.05])
        np.testing.assert_allclose(sample_points(f, uq, vq), uq ** 3 - uq * vq ** 2, atol=1e-10)

    def test_vector_interpolant_shape(self, unit_grid):
        field = VectorField.from_function(unit_grid, lambda u, v: np.stack([u, v, u + v], axis=-1))
        interpolant = FieldInterpolant(field)
        out = interpolant(np.full((2, 3), 0.25), np.full((2, 3), 0.5))
        assert out.shape == (2, 3, 3)
        np.testing.assert_allclose(out[0, 0], [0.25, 0.5, 0.75], atol=1e-12)

    def test_resample_onto_window(self, unit_grid):
        f = ScalarField.from_function(unit_grid, lambda u, v: u * v)
        target = Grid2D(0.2, 0.6, 0.1, 0.3, 5, 7)
        out = resample(f, target)
        U, V = target.mesh()
        np.testing.assert_allclose(out.values, U * V, atol=1e-12)


class TestExpressionsAndSerialization:
    def test_expression(self, unit_grid):
        f = field_from_expression(unit_grid, "0.1*sin(pi*u)*sin(pi*v)")
        U, V = unit_grid.mesh()
        np.testing.assert_allclose(f.values, 0.1 * np.sin(np.pi * U) * np.sin(np.pi * V), atol=1e-14)

    def test_constant_expression_broadcasts(self, unit_grid):
        assert field_from_expression(unit_grid, "0").values.shape == unit_grid.shape

    def test_unknown_symbol(self, unit_grid):
        with pytest.raises(ConfigError):
            field_from_expression(unit_grid, "u + w")

    def test_dict_round_trip_preserves_values(self, unit_grid):
        f = ScalarField.from_function(unit_grid, lambda u, v: u - v)
        back = field_from_dict(field_to_dict(f, quantity="nu"))
        assert back.grid == unit_grid
        np.testing.assert_array_equal(back.values, f.values)

    def test_malformed_dict(self):
        with pytest.raises(ConfigError):
            field_from_dict({"values": [1.0]})

    def test_csv_layout(self, tmp_path):
        grid = Grid2D(0.0, 1.0, 0.0, 1.0, 2, 2)
        path = tmp_path / "field.csv"
        write_field_csv(ScalarField.constant(grid, 1.5), str(path))
        lines = path.read_text().splitlines()
        assert lines[0] == "u,v,value"
        assert len(lines) == 5
