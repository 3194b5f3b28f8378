"""
Command-line tests; every subcommand runs in-process through main()
"""

import json

import numpy as np
from scipy.linalg import expm
import pytest

from bonnet_geometry.cli import (
    EXIT_CONFIG_ERROR,
    EXIT_GATE_FAILURE,
    EXIT_PASS,
    EXIT_PIPELINE_ERROR,
    build_map,
    main,
)
from bonnet_geometry.grid_core import Grid2D, ScalarField, field_to_dict
from bonnet_geometry.hypersurface_builder import KIND_BIUMBILICAL
from bonnet_geometry.utils.error_utils import ConfigError
from bonnet_geometry.utils.json_utils import write_json


def _run(tmp_path, *argv):
    report = tmp_path / "report.json"
    status = main(list(argv) + ["--report", str(report)])
    return status, report


def _load(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


@pytest.fixture
def constant_field_path(tmp_path):
    grid = Grid2D(-0.5, 0.5, -0.5, 0.5, 33, 33)
    path = tmp_path / "nu.json"
    write_json(str(path), field_to_dict(ScalarField.constant(grid, 1.0), quantity="nu"))
    return path


@pytest.fixture
def biumbilical_description(tmp_path):
    path = tmp_path / "desc.json"
    status, _ = _run(tmp_path, "build-hypersurface", "--kind", "biumbilical",
                     "--radius", "2", "--alpha", "0.3", "--out", str(path))
    assert status == EXIT_PASS
    return path


class TestArguments:
    def test_no_command(self, capsys):
        assert main([]) == EXIT_CONFIG_ERROR

    def test_missing_input(self, tmp_path, capsys):
        status, report = _run(tmp_path, "reconstruct", "--input", str(tmp_path / "absent.json"))
        assert status == EXIT_CONFIG_ERROR
        assert "\"error_type\": \"ConfigError\"" in capsys.readouterr().err
        assert not report.exists()

    @pytest.mark.parametrize("flag, value", [("--threads", "0"), ("--gate", "-1")])
    def test_bad_runtime_options(self, tmp_path, capsys, flag, value):
        status, _ = _run(tmp_path, "verify-surface", flag, value)
        assert status == EXIT_CONFIG_ERROR
        assert "ConfigError" in capsys.readouterr().err

    def test_malformed_grid(self, tmp_path, capsys):
        status, _ = _run(tmp_path, "verify-surface", "--grid", "0,1,0,1,5")
        assert status == EXIT_CONFIG_ERROR


class TestVerifySurface:
    def test_clifford_fixture_passes(self, tmp_path):
        status, report = _run(tmp_path, "verify-surface", "--fixture", "clifford")
        assert status == EXIT_PASS
        data = _load(report)
        assert data["passed"] is True
        names = [c["name"] for c in data["checks"]]
        assert "gauss_equation" in names and "codazzi_1" in names
        assert data["provenance"]["command"] == "verify-surface"
        assert report.with_suffix(".csv").read_text().startswith("name,max_residual,mean_residual,gate,passed\n")

    def test_csv_report_path(self, tmp_path):
        table = tmp_path / "report.csv"
        status = main(["verify-surface", "--fixture", "clifford", "--report", str(table)])
        assert status == EXIT_PASS
        assert table.read_text().startswith("name,max_residual,mean_residual,gate,passed\n")
        assert _load(tmp_path / "report.json")["passed"] is True

    def test_measured_order_is_kept(self, tmp_path):
        status, report = _run(tmp_path, "verify-surface", "--fixture", "clifford")
        assert status == EXIT_PASS
        data = _load(report)
        assert data["results"]["swapped_xy"] is False
        assert data["results"]["nu1_mean"] > 0.0

    def test_zero_gate_fails_but_reports(self, tmp_path):
        status, report = _run(tmp_path, "verify-surface", "--gate", "0")
        assert status == EXIT_GATE_FAILURE
        assert _load(report)["passed"] is False

    def test_canonical_parameters(self, tmp_path):
        status, report = _run(tmp_path, "verify-surface", "--canonical")
        assert status == EXIT_PASS
        data = _load(report)
        assert "canonical_metric" in [c["name"] for c in data["checks"]]
        assert data["results"]["canonical_grid"]["u_max"] == pytest.approx(np.sqrt(0.5), rel=1e-3)

    def test_great_sphere_skips_codazzi(self, tmp_path):
        status, report = _run(tmp_path, "verify-surface", "--fixture", "great-sphere",
                              "--grid=-1,1,-1,1,33,33")
        assert status == EXIT_PASS
        assert _load(report)["results"]["codazzi"].startswith("skipped")

    def test_malformed_input(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        status, report = _run(tmp_path, "verify-surface", "--input", str(bad))
        assert status == EXIT_CONFIG_ERROR
        assert "ConfigError" in capsys.readouterr().err
        assert not report.exists()

    def test_surface_round_trip(self, tmp_path):
        surface_path = tmp_path / "surface.json"
        status, _ = _run(tmp_path, "verify-surface", "--out", str(surface_path))
        assert status == EXIT_PASS
        status, report = _run(tmp_path, "verify-surface", "--input", str(surface_path))
        assert status == EXIT_PASS
        data = _load(report)
        assert data["results"]["source"] == "input"
        assert str(surface_path) in data["provenance"]["inputs"]


class TestSolve:
    def test_linear_boundary(self, tmp_path):
        out = tmp_path / "nu.json"
        history = tmp_path / "history.csv"
        status, report = _run(tmp_path, "solve-sinh-poisson", "--grid", "0,1,0,1,17,17",
                              "--boundary", "0.3*u", "--out", str(out), "--history", str(history))
        assert status == EXIT_PASS
        field = _load(out)
        assert field["quantity"] == "nu"
        assert len(field["values"]) == 17 * 17
        assert history.read_text().startswith("iteration,residual_inf,step\n")
        assert _load(report)["results"]["iterations"] >= 1

    def test_tolerance_flag(self, tmp_path):
        iterations = []
        # the zero start already meets a loose tolerance
        for tol in ("1e6", "1e-11"):
            status, report = _run(tmp_path, "solve-sinh-poisson", "--grid", "0,1,0,1,17,17",
                                  "--boundary", "0.3*u", "--tol", tol, "--gate", "1e3")
            assert status == EXIT_PASS
            iterations.append(_load(report)["results"]["iterations"])
        assert iterations[0] == 0
        assert iterations[1] >= 1

    def test_non_positive_tolerance(self, tmp_path, capsys):
        status, _ = _run(tmp_path, "solve-sinh-poisson", "--tol", "0")
        assert status == EXIT_CONFIG_ERROR
        assert "ConfigError" in capsys.readouterr().err

    def test_boundary_from_file(self, tmp_path):
        grid = Grid2D(0.0, 1.0, 0.0, 1.0, 17, 17)
        boundary = tmp_path / "boundary.json"
        write_json(str(boundary), field_to_dict(ScalarField.from_function(grid, lambda u, v: 0.3 * u), quantity="f"))
        out = tmp_path / "nu.json"
        status, report = _run(tmp_path, "solve-sinh-poisson", "--boundary", str(boundary), "--out", str(out))
        assert status == EXIT_PASS
        data = _load(report)
        assert data["provenance"]["grid"] == grid.to_dict()
        assert str(boundary) in data["provenance"]["inputs"]
        assert len(_load(out)["values"]) == 17 * 17

        status, _ = _run(tmp_path, "solve-sinh-poisson", "--boundary", str(boundary), "--grid", "0,1,0,1,9,9")
        assert status == EXIT_CONFIG_ERROR

    def test_bad_expression(self, tmp_path, capsys):
        status, _ = _run(tmp_path, "solve-sinh-poisson", "--grid", "0,1,0,1,9,9", "--boundary", "u +")
        assert status == EXIT_CONFIG_ERROR


class TestReconstruct:
    def test_constant_field_needs_permission(self, tmp_path, constant_field_path, capsys):
        status, _ = _run(tmp_path, "reconstruct", "--input", str(constant_field_path))
        assert status == EXIT_PIPELINE_ERROR
        assert "RegularityError" in capsys.readouterr().err

    def test_constant_field_with_permission(self, tmp_path, constant_field_path):
        out = tmp_path / "surface.json"
        status, report = _run(tmp_path, "reconstruct", "--input", str(constant_field_path),
                              "--allow-degenerate", "--out", str(out))
        assert status == EXIT_PASS
        data = _load(report)
        assert data["results"]["strongly_regular"] is False
        surface = _load(out)
        assert {"grid", "l", "X", "Y"} <= set(surface)
        assert len(surface["l"]) == 33 * 33


    def test_initial_frame_from_file(self, tmp_path, constant_field_path):
        rotation = expm(np.array([
            [0.0, 0.3, 0.0, 0.1],
            [-0.3, 0.0, 0.2, 0.0],
            [0.0, -0.2, 0.0, 0.4],
            [-0.1, 0.0, -0.4, 0.0],
        ]))
        frame_path = tmp_path / "frame0.json"
        write_json(str(frame_path), rotation.tolist())
        out = tmp_path / "surface.json"
        status, report = _run(tmp_path, "reconstruct", "--nu", str(constant_field_path), "--frame0", str(frame_path),
                              "--allow-degenerate", "--out", str(out))
        assert status == EXIT_PASS
        centre = 16 * 33 + 16
        np.testing.assert_allclose(_load(out)["l"][centre], rotation[3], atol=1e-12)
        assert str(frame_path) in _load(report)["provenance"]["inputs"]

    def test_identity_frame_by_name(self, tmp_path, constant_field_path):
        out = tmp_path / "surface.json"
        status, _ = _run(tmp_path, "reconstruct", "--nu", str(constant_field_path), "--frame0", "identity",
                         "--allow-degenerate", "--out", str(out))
        assert status == EXIT_PASS
        np.testing.assert_allclose(_load(out)["l"][16 * 33 + 16], [0.0, 0.0, 0.0, 1.0], atol=1e-12)

    @pytest.mark.parametrize("frame", [2.0 * np.eye(4), np.eye(3), {"frame": np.eye(4).tolist(), "node": [99, 0]}])
    def test_rejected_initial_frames(self, tmp_path, constant_field_path, capsys, frame):
        frame_path = tmp_path / "frame0.json"
        write_json(str(frame_path), frame if isinstance(frame, dict) else frame.tolist())
        status, _ = _run(tmp_path, "reconstruct", "--nu", str(constant_field_path), "--frame0", str(frame_path),
                         "--allow-degenerate")
        assert status == EXIT_CONFIG_ERROR
        assert "ConfigError" in capsys.readouterr().err


class TestAssociatedFamily:
    def test_family_from_solved_field(self, tmp_path):
        nu_path = tmp_path / "nu.json"
        status, _ = _run(tmp_path, "solve-sinh-poisson", "--grid=-0.15,0.15,-0.15,0.15,31,31",
                         "--boundary", "cos(pi/8)*u + sin(pi/8)*v", "--out", str(nu_path))
        assert status == EXIT_PASS
        out_dir = tmp_path / "family"
        status, report = _run(tmp_path, "associated-family", "--nu", str(nu_path), "--angles", "4",
                              "--out", str(out_dir))
        assert status == EXIT_PASS
        data = _load(report)
        assert data["results"]["members"] == 4
        assert data["failures"] == []
        assert sorted(p.name for p in out_dir.iterdir()) == [
            "isometry_report.csv", "member_00.json", "member_01.json", "member_02.json", "member_03.json",
        ]


class TestHypersurfaces:
    def test_description(self, biumbilical_description):
        description = _load(biumbilical_description)
        assert description["construction"] == KIND_BIUMBILICAL
        assert description["radius"] == 2.0
        assert build_map(description).n == 3

    def test_incomplete_description(self):
        with pytest.raises(ConfigError):
            build_map({"construction": KIND_BIUMBILICAL, "n": 3})
        with pytest.raises(ConfigError):
            build_map({"construction": "torus", "n": 3})

    def test_classify(self, tmp_path, biumbilical_description):
        table = tmp_path / "spectrum.csv"
        status, report = _run(tmp_path, "classify", "--in", str(biumbilical_description),
                              "--samples", "3", "--csv", str(table))
        assert status == EXIT_PASS
        data = _load(report)
        assert data["results"]["classifications"] == ["bi_umbilical"]
        assert len(table.read_text().splitlines()) == 4

    def test_classify_csv_report_is_the_spectrum(self, tmp_path, biumbilical_description):
        table = tmp_path / "spectrum.csv"
        status = main(["classify", "--in", str(biumbilical_description), "--samples", "4", "--report", str(table)])
        assert status == EXIT_PASS
        lines = table.read_text().splitlines()
        assert len(lines) == 5
        assert lines[0].startswith("u,v,w_norm")
        assert _load(tmp_path / "spectrum.json")["results"]["samples"] == 4

    def test_minimal_r3_construction(self, tmp_path):
        status, report = _run(tmp_path, "build-hypersurface", "--construction", "minimal-r3",
                              "--surface", "catenoid")
        assert status == EXIT_PASS
        assert _load(report)["results"]["hull_dimension"] == 3


class TestExport:
    def test_surface_export_is_deterministic(self, tmp_path):
        surface_path = tmp_path / "surface.json"
        _run(tmp_path, "verify-surface", "--grid=-1,1,-1,1,9,9", "--out", str(surface_path))
        meshes = []
        for name in ("a.obj", "b.obj"):
            status, report = _run(tmp_path, "export", "--input", str(surface_path), "--out", str(tmp_path / name))
            assert status == EXIT_PASS
            meshes.append((tmp_path / name).read_bytes())
            assert _load(report)["results"]["vertices"] == 81
        assert meshes[0] == meshes[1]

    def test_hypersurface_slice(self, tmp_path, biumbilical_description):
        out = tmp_path / "slice.obj"
        status, report = _run(tmp_path, "export", "--input", str(biumbilical_description), "--w", "0.1",
                              "--grid=-0.5,0.5,-0.5,0.5,5,5", "--projection", "drop-coordinate",
                              "--out", str(out))
        assert status == EXIT_PASS
        lines = out.read_text().splitlines()
        assert lines[0] == "# bonnet-geometry mesh 5x5"
        assert sum(line.startswith("f ") for line in lines) == 16

    def test_slice_needs_matching_w(self, tmp_path, biumbilical_description):
        status, _ = _run(tmp_path, "export", "--input", str(biumbilical_description), "--w", "0.1,0.2",
                         "--out", str(tmp_path / "slice.obj"))
        assert status == EXIT_CONFIG_ERROR

    def test_pole_needs_four_values(self, tmp_path):
        surface_path = tmp_path / "surface.json"
        _run(tmp_path, "verify-surface", "--grid=-1,1,-1,1,9,9", "--out", str(surface_path))
        status, _ = _run(tmp_path, "export", "--input", str(surface_path), "--pole", "0,0,1",
                         "--out", str(tmp_path / "mesh.obj"))
        assert status == EXIT_CONFIG_ERROR
