"""
Frame integration tests: coefficient matrices, compatibility, RK4 transport
and reconstruction from normal-curvature fields
"""

import numpy as np
import pytest
from scipy.linalg import expm

from bonnet_geometry.grid_core import ScalarField, partial_u, partial_v
from bonnet_geometry.sinh_poisson import NormalCurvatureField
from bonnet_geometry.surface_geometry import invariants
from bonnet_geometry.frame_integrator import (
    InitialFrame,
    InvariantData,
    build_matrices_canonical,
    build_matrices_general,
    certified_window,
    compatibility_report,
    compatibility_residual,
    frame_from_surface,
    integrate_frame,
    path_disagreement,
    project_to_so4,
    reconstruct_surface,
    theorem_conditions,
)
from bonnet_geometry.utils.error_utils import (
    DomainError,
    GateError,
    RegularityError,
    SingularityError,
    StepFailureError,
)

from .conftest import solve_regular


class TestMatrices:
    def test_canonical_matrices_are_skew(self, regular_nu):
        m = build_matrices_canonical(regular_nu)
        assert m.skew_defect() == 0.0
        assert m.strongly_regular

    def test_constant_field_is_flagged(self, constant_nu):
        m = build_matrices_canonical(constant_nu)
        assert not m.strongly_regular
        # X-N and X-l entries of A for nu = 1
        assert m.A[0, 0, 0, 2] == pytest.approx(1.0)
        assert m.A[0, 0, 0, 3] == pytest.approx(-1.0)

    def test_general_matches_canonical(self, regular_nu):
        canonical = build_matrices_canonical(regular_nu)
        general = build_matrices_general(InvariantData.canonical(regular_nu))
        np.testing.assert_allclose(general.A, canonical.A, atol=1e-10)
        np.testing.assert_allclose(general.B, canonical.B, atol=1e-10)

    def test_general_rejects_violated_condition(self, regular_nu):
        inv = InvariantData.canonical(regular_nu)
        flipped = InvariantData(inv.nu1, inv.nu2, ScalarField(inv.grid, -inv.gamma1.values), inv.gamma2)
        with pytest.raises(DomainError) as info:
            build_matrices_general(flipped)
        assert info.value.details["condition"] == "gamma1 (nu1)_v > 0"

    def test_general_on_window(self, regular_nu):
        window = regular_nu.grid.window(5, 25, 5, 25)
        m = build_matrices_general(InvariantData.canonical(regular_nu), window)
        assert m.grid == window
        assert m.A.shape == (21, 21, 4, 4)


class TestCompatibility:
    def test_constant_field_is_exactly_compatible(self, constant_nu):
        res = compatibility_residual(build_matrices_canonical(constant_nu))
        assert res.max_abs() == 0.0

    def test_solved_field_passes_gate(self, regular_nu):
        m = build_matrices_canonical(regular_nu)
        gate = 10.0 * regular_nu.grid.h ** 2
        report = compatibility_report(m, InvariantData.canonical(regular_nu), gate=gate)
        assert report.passed
        assert set(report.conditions) == {"condition_2_1_u", "condition_2_1_v", "condition_2_2"}

    def test_second_order_convergence(self):
        residuals, disagreements = [], []
        for nodes in (21, 41, 81):
            nu = solve_regular(nodes)
            m = build_matrices_canonical(nu)
            residuals.append(compatibility_residual(m).max_abs())
            disagreements.append(path_disagreement(m, InitialFrame.identity(nu.grid)))
        for values in (residuals, disagreements):
            assert 3.5 < values[0] / values[1] < 4.5
            assert 3.5 < values[1] / values[2] < 4.5

    def test_nested_differences_mask_two_rings(self, regular_nu):
        grid = regular_nu.grid
        m = build_matrices_canonical(regular_nu)
        np.testing.assert_array_equal(m.valid, grid.interior_mask(1))
        res = compatibility_residual(m)
        np.testing.assert_array_equal(res.valid, grid.interior_mask(2))
        assert res.values[1, 1] == 0.0

    def test_general_matrices_mask_window_edges(self, regular_nu):
        window = regular_nu.grid.window(5, 25, 5, 25)
        m = build_matrices_general(InvariantData.canonical(regular_nu), window)
        assert m.valid.all()
        np.testing.assert_array_equal(compatibility_residual(m).valid, window.interior_mask(1))

    def test_conditions_need_strong_regularity(self, constant_nu):
        with pytest.raises(SingularityError):
            theorem_conditions(InvariantData.canonical(constant_nu))

    def test_report_skips_conditions_for_constant_field(self, constant_nu):
        report = compatibility_report(build_matrices_canonical(constant_nu), InvariantData.canonical(constant_nu))
        assert report.conditions == {}
        assert report.passed


class TestInitialFrame:
    def test_identity_at_centre(self, constant_nu):
        initial = InitialFrame.identity(constant_nu.grid)
        assert initial.node == (50, 50)

    @pytest.mark.parametrize("frame", [
        2.0 * np.eye(4),
        np.diag([-1.0, 1.0, 1.0, 1.0]),
        np.eye(3),
    ])
    def test_invalid_frames(self, frame):
        with pytest.raises(DomainError):
            InitialFrame(frame, (0, 0))

    def test_projection_restores_orthonormality(self):
        rng = np.random.default_rng(3)
        frames = np.eye(4) + 1e-3 * rng.standard_normal((5, 4, 4))
        projected = project_to_so4(frames)
        gram = projected @ np.swapaxes(projected, -1, -2)
        np.testing.assert_allclose(gram, np.broadcast_to(np.eye(4), gram.shape), atol=1e-12)
        assert np.all(np.linalg.det(projected) > 0)


class TestIntegration:
    def test_constant_field_matches_matrix_exponential(self, constant_nu):
        grid = constant_nu.grid
        m = build_matrices_canonical(constant_nu)
        frame = integrate_frame(m, InitialFrame.identity(grid))
        A, B = m.A[0, 0], m.B[0, 0]
        u0, v0 = grid.node(*grid.center_index())
        for i, j in [(0, 0), (0, 100), (100, 0), (100, 100), (17, 83), (50, 50)]:
            u, v = grid.node(i, j)
            expected = expm(A * (u - u0) + B * (v - v0))
            np.testing.assert_allclose(frame.values[i, j], expected, atol=1e-8)

    def test_frame_stays_orthonormal(self, regular_nu):
        frame = integrate_frame(build_matrices_canonical(regular_nu), InitialFrame.identity(regular_nu.grid))
        assert frame.gram_defect() < 1e-9
        assert frame.unit_sphere_defect() < 1e-9
        assert np.all(frame.determinants() > 0)

    def test_initial_frame_is_kept(self, regular_nu):
        rotation = expm(np.array([
            [0.0, 0.3, 0.0, 0.1],
            [-0.3, 0.0, 0.2, 0.0],
            [0.0, -0.2, 0.0, 0.4],
            [-0.1, 0.0, -0.4, 0.0],
        ]))
        initial = InitialFrame(rotation, (4, 9))
        frame = integrate_frame(build_matrices_canonical(regular_nu), initial)
        np.testing.assert_array_equal(frame.values[4, 9], initial.frame)

    def test_commuting_generators_agree_on_both_paths(self, constant_nu):
        m = build_matrices_canonical(constant_nu)
        assert path_disagreement(m, InitialFrame.identity(constant_nu.grid)) < 1e-9

    def test_drift_failure_names_node(self, regular_nu):
        m = build_matrices_canonical(regular_nu)
        with pytest.raises(StepFailureError) as info:
            integrate_frame(m, InitialFrame.identity(regular_nu.grid), drift_tol=1e-300)
        assert len(info.value.details["node"]) == 2

    def test_bad_order_and_node(self, regular_nu):
        m = build_matrices_canonical(regular_nu)
        with pytest.raises(DomainError):
            integrate_frame(m, InitialFrame.identity(regular_nu.grid), order="diagonal")
        with pytest.raises(DomainError):
            integrate_frame(m, InitialFrame(np.eye(4), (40, 0)))

    def test_frame_from_clifford_torus(self, clifford):
        frame = frame_from_surface(clifford)
        assert frame.gram_defect() < 1e-4
        np.testing.assert_array_equal(frame.l.values, clifford.l.values)


class TestCertifiedWindow:
    def test_whole_grid_for_clean_solution(self, regular_nu):
        assert certified_window(regular_nu, 1e-8) == regular_nu.grid

    def test_shrinks_past_a_bad_ring(self, regular_nu):
        grid = regular_nu.grid
        values = np.array(regular_nu.nu.values)
        values[0, :] *= 1.1
        window = certified_window(NormalCurvatureField(ScalarField(grid, values)), 1e-8)
        assert window == grid.window(2, 28, 2, 28)

    def test_constant_field_has_no_window(self, constant_nu):
        with pytest.raises(RegularityError):
            certified_window(constant_nu, 1e-8)


class TestReconstruction:
    def test_constant_field_gives_clifford_torus(self, constant_nu):
        rebuilt = reconstruct_surface(constant_nu, allow_degenerate=True)
        assert not rebuilt.strongly_regular
        assert rebuilt.window == constant_nu.grid
        inv = invariants(rebuilt.surface, check_normal=False)
        grid = constant_nu.grid
        mask = grid.interior_mask(1)
        h2 = grid.h ** 2
        np.testing.assert_allclose(inv.nu1.values[mask], 1.0, atol=h2)
        np.testing.assert_allclose(inv.nu2.values[mask], -1.0, atol=h2)
        np.testing.assert_allclose(inv.E.values[mask], 1.0, atol=h2)

    def test_constant_field_needs_permission(self, constant_nu):
        with pytest.raises(RegularityError):
            reconstruct_surface(constant_nu)

    def test_round_trip_of_invariants(self, regular_nu):
        rebuilt = reconstruct_surface(regular_nu)
        assert rebuilt.strongly_regular
        assert rebuilt.residual_max < 1e-8
        grid = regular_nu.grid
        gate = 20.0 * grid.h ** 2
        inv = invariants(rebuilt.surface, principal_tol=gate, check_normal=False)
        mask = grid.interior_mask(1)
        np.testing.assert_allclose(inv.nu1.values[mask], regular_nu.nu.values[mask], atol=gate)
        np.testing.assert_allclose(inv.nu2.values[mask], -regular_nu.nu.values[mask], atol=gate)

        root = ScalarField(grid, np.sqrt(regular_nu.nu.values))
        inner = grid.interior_mask(2)
        np.testing.assert_allclose(inv.gamma1.values[inner], partial_v(root).values[inner], atol=gate)
        np.testing.assert_allclose(inv.gamma2.values[inner], -partial_u(root).values[inner], atol=gate)

    def test_fine_grid_reconstruction_keeps_frame_orthonormal(self):
        nu = solve_regular(101)
        rebuilt = reconstruct_surface(nu)
        assert rebuilt.window == nu.grid
        assert rebuilt.frame.gram_defect() < 1e-9
        assert rebuilt.frame.unit_sphere_defect() < 1e-9
        assert np.all(rebuilt.frame.determinants() > 0)

    def test_gate_is_checked_before_integration(self, regular_nu):
        with pytest.raises(GateError) as info:
            reconstruct_surface(regular_nu, gate=1e-20, window=regular_nu.grid)
        assert info.value.details["gate"] == 1e-20

