"""
Reports module
Verification reports, surface and field artifacts, residual tables and mesh
export. Every writer produces identical bytes for identical inputs.
"""

import csv
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .frame_integrator import FrameField
from .grid_core import Grid2D, VectorField, VectorField4
from .surface_geometry import SurfaceS3
from .utils.error_utils import ConfigError, DomainError, ProjectionError
from .utils.json_utils import read_json, write_json

logger = logging.getLogger(__name__)

DEFAULT_POLE = (0.0, 0.0, 0.0, -1.0)
POLE_TOL = 1e-6
CSV_PRECISION = 12


def _fmt(value: Optional[float], precision: int = CSV_PRECISION) -> str:
    if value is None:
        return ""
    return f"{float(value):.{precision}e}"


@dataclass
class CheckResult:
    """One named check; checks without a gate are informational"""

    name: str
    max_residual: float
    mean_residual: Optional[float] = None
    gate: Optional[float] = None

    @property
    def gated(self) -> bool:
        return self.gate is not None

    @property
    def passed(self) -> bool:
        return self.gate is None or bool(self.max_residual < self.gate)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "max_residual": float(self.max_residual),
            "mean_residual": None if self.mean_residual is None else float(self.mean_residual),
            "gate": None if self.gate is None else float(self.gate),
            "passed": self.passed,
        }


@dataclass
class VerificationReport:
    """
    Named checks plus provenance of one run

    The report passes iff every gated check passes and no failure record was
    attached.
    """

    command: str
    checks: List[CheckResult] = field(default_factory=list)
    provenance: Dict[str, Any] = field(default_factory=dict)
    results: Dict[str, Any] = field(default_factory=dict)
    failures: List[Dict[str, Any]] = field(default_factory=list)

    def add(self, name: str, max_residual: float, mean_residual: Optional[float] = None,
            gate: Optional[float] = None) -> CheckResult:
        check = CheckResult(name, float(max_residual), mean_residual, gate)
        self.checks.append(check)
        level = logging.INFO if check.passed else logging.WARNING
        logger.log(level, f"Check {name}: max {check.max_residual:.3e} gate {gate} passed={check.passed}")
        return check

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks) and not self.failures

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
            "failures": self.failures,
            "provenance": self.provenance,
            "results": self.results,
        }

    def write_json(self, path: str) -> None:
        write_json(path, self.to_dict())
        logger.info(f"Report written to {path}")

    def write_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["name", "max_residual", "mean_residual", "gate", "passed"])
            for c in self.checks:
                writer.writerow([c.name, _fmt(c.max_residual), _fmt(c.mean_residual), _fmt(c.gate),
                                 "true" if c.passed else "false"])


# ---------------------------------------------------------------------------
# Surface artifacts
# ---------------------------------------------------------------------------

def surface_to_dict(surface: SurfaceS3, frame: Optional[FrameField] = None) -> Dict[str, Any]:
    """{grid, l, N?, X?, Y?}; vectors flattened row-major with u outermost"""
    data: Dict[str, Any] = {
        "grid": surface.grid.to_dict(),
        "l": surface.l.values.reshape(-1, 4).tolist(),
    }
    if surface.N is not None:
        data["N"] = surface.N.values.reshape(-1, 4).tolist()
    if frame is not None:
        data["X"] = frame.X.values.reshape(-1, 4).tolist()
        data["Y"] = frame.Y.values.reshape(-1, 4).tolist()
    return data


def surface_from_dict(data: Dict[str, Any], unit_tol: float = 1e-8) -> SurfaceS3:
    if not isinstance(data, dict) or "grid" not in data or "l" not in data:
        raise ConfigError("Surface JSON needs 'grid' and 'l' keys")
    grid = Grid2D.from_dict(data["grid"])
    try:
        l = np.asarray(data["l"], dtype=float).reshape(grid.nu, grid.nv, 4)
        N = None if "N" not in data else np.asarray(data["N"], dtype=float).reshape(grid.nu, grid.nv, 4)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Surface values do not match grid: {str(e)}")
    return SurfaceS3(grid, VectorField4(grid, l), None if N is None else VectorField4(grid, N), unit_tol)


def write_surface_json(path: str, surface: SurfaceS3, frame: Optional[FrameField] = None) -> None:
    write_json(path, surface_to_dict(surface, frame))


def read_json_input(path: str) -> Any:
    """Read a JSON input file; malformed documents are configuration errors"""
    try:
        return read_json(path)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Malformed JSON in {path}: {str(e)}", {"path": path})
    except OSError as e:
        raise ConfigError(f"Cannot read {path}: {str(e)}", {"path": path})


def read_surface_json(path: str, unit_tol: float = 1e-8) -> SurfaceS3:
    return surface_from_dict(read_json_input(path), unit_tol)


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------

def write_history_csv(path: str, history: Sequence[Tuple[int, float, float]]) -> None:
    """Newton history with columns iteration, residual_inf, step"""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["iteration", "residual_inf", "step"])
        for iteration, res, step in history:
            writer.writerow([int(iteration), _fmt(res), _fmt(step)])


def write_rows_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """Generic table; floats in fixed exponent notation"""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([
                _fmt(x) if isinstance(x, (float, np.floating)) else
                ("true" if x else "false") if isinstance(x, (bool, np.bool_)) else x
                for x in row
            ])


def write_spectrum_csv(path: str, samples: Sequence[Any]) -> None:
    """One row per sample: u, v, w_norm, eigenvalues..., type_number, classification"""
    if not samples:
        raise DomainError("No spectrum samples to write")
    n = samples[0].spectrum.n
    header = ["u", "v", "w_norm"] + [f"eig_{k + 1}" for k in range(n)] + ["type_number", "classification"]
    rows = [
        [s.u, s.v, s.w_norm] + [float(x) for x in s.spectrum.eigenvalues]
        + [int(s.spectrum.type_number), s.spectrum.classification]
        for s in samples
    ]
    write_rows_csv(path, header, rows)


# ---------------------------------------------------------------------------
# Mesh export
# ---------------------------------------------------------------------------

def _complement_basis(pole: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the hyperplane orthogonal to the pole"""
    axes = np.flatnonzero(np.abs(pole) > 0)
    if axes.size == 1:
        k = int(axes[0])
        return np.delete(np.eye(pole.size), k, axis=0)
    _, _, vh = np.linalg.svd(pole[None, :])
    return vh[1:]


def stereographic(points: np.ndarray, pole: Sequence[float] = DEFAULT_POLE) -> np.ndarray:
    """
    Stereographic projection of S^3 from `pole` onto the hyperplane orthogonal to it

        y = (x - <x, p> p) / (1 - <x, p>)

    expressed in an orthonormal basis of p-perp; for a coordinate pole the
    basis is the remaining coordinate axes in order.

    Raises:
        ProjectionError: If some point lies within 1e-6 of the pole
    """
    p = np.asarray(pole, dtype=float)
    p = p / np.linalg.norm(p)
    x = np.asarray(points, dtype=float)
    distance = np.linalg.norm(x - p, axis=-1)
    if np.any(distance < POLE_TOL):
        idx = np.unravel_index(int(np.argmin(distance)), distance.shape)
        raise ProjectionError(
            f"Point {list(map(int, idx))} coincides with the projection pole; "
            f"use the antipodal pole {(-p).tolist()}",
            {"node": [int(i) for i in idx], "suggested_pole": (-p).tolist()},
        )
    dot = np.sum(x * p, axis=-1, keepdims=True)
    projected = (x - dot * p) / (1.0 - dot)
    return projected @ _complement_basis(p).T


def project_points(points: np.ndarray, projection: str = "stereographic",
                   pole: Sequence[float] = DEFAULT_POLE) -> np.ndarray:
    if projection == "stereographic":
        if points.shape[-1] != 4:
            raise ProjectionError("Stereographic export needs points in R^4; use drop-coordinate")
        return stereographic(points, pole)
    if projection == "drop-coordinate":
        return points[..., :3]
    raise ConfigError(f"Unknown projection: {projection}")


def mesh_text(points: np.ndarray, precision: int = 10) -> str:
    """OBJ text: one vertex per node (u outermost) then quad faces in grid order"""
    nu, nv = points.shape[:2]
    lines = [f"# bonnet-geometry mesh {nu}x{nv}"]
    for x, y, z in points.reshape(-1, 3) + 0.0:
        lines.append(f"v {x:.{precision}f} {y:.{precision}f} {z:.{precision}f}")
    for i in range(nu - 1):
        for j in range(nv - 1):
            a = i * nv + j + 1
            b = (i + 1) * nv + j + 1
            lines.append(f"f {a} {b} {b + 1} {a + 1}")
    return "\n".join(lines) + "\n"


def export_mesh(surface: Union[SurfaceS3, VectorField], path: str, projection: str = "stereographic",
                pole: Sequence[float] = DEFAULT_POLE, precision: int = 10) -> None:
    """
    Write a surface in S^3 (or a hypersurface slice) as a Wavefront OBJ mesh

    Args:
        surface: SurfaceS3 or a vector field of points
        path: Output path
        projection: "stereographic" or "drop-coordinate" (keeps the first three coordinates)
        pole: Projection pole for stereographic export
        precision: Digits after the decimal point

    Raises:
        ProjectionError: If a node sits at the pole
    """
    points = surface.l.values if isinstance(surface, SurfaceS3) else surface.values
    if not np.all(np.isfinite(points)):
        raise DomainError("Surface has non-finite points")
    projected = project_points(points, projection, pole)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(mesh_text(projected, precision))
    logger.info(f"Mesh written to {path} ({projection})")
