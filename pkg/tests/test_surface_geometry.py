"""
Surface geometry tests: fundamental forms, invariants, Gauss-Codazzi residuals
and canonical reparameterization on analytic surfaces
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from bonnet_geometry.grid_core import Grid2D, ScalarField
from bonnet_geometry.surface_geometry import (
    SurfaceS3,
    canonical_reparameterize,
    clifford_torus,
    codazzi_residual,
    fundamental_forms,
    gauss_residual,
    great_sphere,
    intrinsic_gauss_curvature,
    invariants,
    order_principal,
    rotate_surface,
    small_sphere,
    swap_parameters,
)
from bonnet_geometry.utils.error_utils import DomainError, PrincipalNetError, SingularityError


def _rotation(params):
    S = np.zeros((4, 4))
    S[np.triu_indices(4, 1)] = params
    return expm(S - S.T)


class TestSurfaceS3:
    def test_off_sphere_rejected(self, clifford_grid):
        U, V = clifford_grid.mesh()
        l = np.stack([np.cos(U), np.sin(U), np.cos(V), np.sin(V)], axis=-1)
        with pytest.raises(DomainError) as info:
            SurfaceS3.from_array(clifford_grid, l)
        assert info.value.details["defect"] == pytest.approx(np.sqrt(2.0) - 1.0)

    def test_fields_on_other_grid_rejected(self, clifford, unit_grid):
        other = clifford_torus(unit_grid)
        with pytest.raises(DomainError):
            SurfaceS3(clifford.grid, clifford.l, other.l)


class TestCliffordTorus:
    def test_metric(self, clifford):
        forms = fundamental_forms(clifford)
        mask = clifford.grid.interior_mask(1)
        h2 = clifford.grid.h ** 2
        np.testing.assert_allclose(forms.E.values[mask], 0.5, atol=h2)
        np.testing.assert_allclose(forms.G.values[mask], 0.5, atol=h2)
        assert np.max(np.abs(forms.F.values)) < 1e-14

    def test_principal_curvatures(self, clifford):
        inv = invariants(clifford)
        mask = clifford.grid.interior_mask(1)
        h2 = clifford.grid.h ** 2
        # Orientation det[l_u, l_v, N, l] > 0 puts the positive curvature on u
        np.testing.assert_allclose(inv.nu1.values[mask], 1.0, atol=h2)
        np.testing.assert_allclose(inv.nu2.values[mask], -1.0, atol=h2)
        assert np.max(np.abs(inv.mean_curvature.values[mask])) < 1e-10

    def test_connection_forms_vanish(self, clifford):
        inv = invariants(clifford)
        assert np.max(np.abs(inv.gamma1.values)) < 1e-12
        assert np.max(np.abs(inv.gamma2.values)) < 1e-12

    def test_flat(self, clifford):
        inv = invariants(clifford)
        mask = clifford.grid.interior_mask(1)
        h2 = clifford.grid.h ** 2
        assert np.max(np.abs(1.0 + inv.nu1.values * inv.nu2.values)[mask]) < h2
        assert intrinsic_gauss_curvature(inv).max_abs() < 1e-12

    def test_gauss_and_codazzi_residuals(self, clifford):
        inv = invariants(clifford)
        gate = 20.0 * clifford.grid.h ** 2
        assert gauss_residual(inv).max_abs() < gate
        # constant invariants leave only round-off, amplified by three nested differences
        roundoff = 100.0 * np.finfo(float).eps / clifford.grid.h ** 3
        first, second = codazzi_residual(inv)
        assert first.max_abs() < roundoff
        assert second.max_abs() < roundoff

    def test_supplied_normal_is_checked(self, clifford):
        forms = fundamental_forms(clifford)
        supplied = SurfaceS3(clifford.grid, clifford.l, forms.N)
        assert fundamental_forms(supplied).principal_net_defect() < 1e-12
        with pytest.raises(DomainError):
            fundamental_forms(SurfaceS3(clifford.grid, clifford.l, clifford.l))

    def test_perturbed_normal_breaks_gauss_equation(self):
        grid = Grid2D(-1.0, 1.0, -1.0, 1.0, 129, 129)
        torus = clifford_torus(grid)
        N = fundamental_forms(torus).N.values
        theta = 0.8
        tilted = np.cos(theta) * N + np.sin(theta) * torus.l.values
        inv = invariants(SurfaceS3.from_array(grid, torus.l.values, tilted), check_normal=False)
        gate = 20.0 * grid.h ** 2
        assert gauss_residual(inv).max_abs() > 100.0 * gate

    def test_ordering_keeps_measured_order(self, clifford):
        ordered, inv, swapped = order_principal(clifford)
        assert not swapped
        assert ordered is clifford
        mask = clifford.grid.interior_mask(1)
        np.testing.assert_allclose(inv.nu1.values[mask], 1.0, atol=clifford.grid.h ** 2)

    def test_reversed_normal_exchanges_x_and_y(self):
        grid = Grid2D(-1.0, 1.0, -0.5, 0.5, 41, 21)
        torus = clifford_torus(grid)
        reversed_normal = SurfaceS3.from_array(grid, torus.l.values, -fundamental_forms(torus).N.values)
        raw = invariants(reversed_normal)
        mask = grid.interior_mask(1)
        assert np.all((raw.nu1.values - raw.nu2.values)[mask] < 0.0)

        ordered, inv, swapped = order_principal(reversed_normal)
        assert swapped
        assert ordered.grid == grid.transposed()
        np.testing.assert_allclose(inv.nu1.values, raw.nu2.values.T, atol=1e-12)
        np.testing.assert_allclose(inv.nu2.values, raw.nu1.values.T, atol=1e-12)
        np.testing.assert_allclose(inv.nu1.values[mask.T], 1.0, atol=grid.h ** 2)
        assert codazzi_residual(inv)[0].max_abs() < 1e-8

    def test_swap_parameters_transposes_fields(self, clifford):
        swapped = swap_parameters(clifford)
        np.testing.assert_array_equal(swapped.l.values[3, 7], clifford.l.values[7, 3])
        assert swapped.N is None
        assert swap_parameters(swapped).grid == clifford.grid


class TestUmbilicSurfaces:
    def test_great_sphere_is_totally_geodesic(self):
        grid = Grid2D(-1.0, 1.0, -1.0, 1.0, 33, 33)
        inv = invariants(great_sphere(grid))
        assert inv.nu1.max_abs() < 1e-10
        assert inv.nu2.max_abs() < 1e-10
        with pytest.raises(SingularityError):
            codazzi_residual(inv)

    def test_great_sphere_passes_gauss_gate(self):
        grid = Grid2D(-1.0, 1.0, -1.0, 1.0, 33, 33)
        inv = invariants(great_sphere(grid))
        gate = 20.0 * grid.h ** 2
        gauss = gauss_residual(inv)
        np.testing.assert_array_equal(gauss.valid, grid.interior_mask(2))
        assert gauss.max_abs() < gate
        intrinsic = intrinsic_gauss_curvature(inv)
        np.testing.assert_array_equal(intrinsic.valid, grid.interior_mask(2))
        assert np.max(np.abs(intrinsic.values - 1.0)[intrinsic.valid]) < gate

    def test_small_sphere_is_umbilic(self):
        grid = Grid2D(-0.5, 0.5, -0.5, 0.5, 101, 101)
        inv = invariants(small_sphere(grid, height=0.5))
        mask = grid.interior_mask(1)
        expected = 0.5 / np.sqrt(0.75)
        np.testing.assert_allclose(np.abs(inv.nu1.values[mask]), expected, atol=2e-3)
        np.testing.assert_allclose(inv.nu1.values[mask], inv.nu2.values[mask], atol=2e-3)


class TestPrincipalNet:
    def test_diagonal_parameters_are_rejected(self, clifford_grid):
        U, V = clifford_grid.mesh()
        a, b = U + V, U - V
        l = np.stack([np.cos(a), np.sin(a), np.cos(b), np.sin(b)], axis=-1) / np.sqrt(2.0)
        surface = SurfaceS3.from_array(clifford_grid, l)
        assert fundamental_forms(surface).principal_net_defect() > 0.5
        with pytest.raises(PrincipalNetError):
            invariants(surface)


class TestRotation:
    @given(params=st.lists(st.floats(-2.0, 2.0), min_size=6, max_size=6))
    @settings(max_examples=20, deadline=None)
    def test_invariants_are_rotation_invariant(self, params):
        grid = Grid2D(-0.5, 0.5, -0.5, 0.5, 21, 21)
        torus = clifford_torus(grid)
        before = invariants(torus)
        after = invariants(rotate_surface(torus, _rotation(params)))
        for name in ("E", "F", "G", "e", "f", "g", "nu1", "nu2"):
            np.testing.assert_allclose(
                getattr(after, name).values, getattr(before, name).values, atol=1e-9, err_msg=name
            )


class TestCanonicalParameters:
    def test_clifford_torus(self):
        grid = Grid2D(-0.5, 0.5, -0.5, 0.5, 201, 201)
        torus = clifford_torus(grid)
        canonical = canonical_reparameterize(torus, invariants(torus))
        new_grid = canonical.grid
        assert new_grid.u_max == pytest.approx(0.5 / np.sqrt(2.0), rel=1e-4)
        expected = clifford_torus(new_grid, scale=np.sqrt(2.0))
        np.testing.assert_allclose(canonical.l.values, expected.l.values, atol=1e-5)

    def test_canonical_metric_is_inverse_nu(self):
        grid = Grid2D(-0.5, 0.5, -0.5, 0.5, 201, 201)
        torus = clifford_torus(grid)
        inv = invariants(canonical_reparameterize(torus, invariants(torus)))
        mask = inv.grid.interior_mask(1)
        np.testing.assert_allclose(inv.E.values[mask], 1.0, atol=1e-3)
        np.testing.assert_allclose(inv.nu1.values[mask], 1.0, atol=1e-3)

    def test_non_minimal_rejected(self):
        grid = Grid2D(-0.5, 0.5, -0.5, 0.5, 201, 201)
        torus = clifford_torus(grid)
        inv = invariants(torus)
        inv.nu2 = ScalarField(grid, inv.nu2.values + 0.1)
        with pytest.raises(DomainError):
            canonical_reparameterize(torus, inv)
