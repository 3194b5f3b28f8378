"""
Associated family module
Rotates the arguments of a sinh-Poisson solution to obtain the one-parameter
family of isometric minimal surfaces, reconstructs every member from a shared
initial frame, and measures the pairwise isometry.
"""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .frame_integrator import InitialFrame, reconstruct_surface
from .grid_core import Grid2D, ScalarField, sample_points
from .sinh_poisson import NormalCurvatureField
from .surface_geometry import SurfaceS3, fundamental_forms
from .utils.error_utils import BonnetError, DomainError, handle_exception

logger = logging.getLogger(__name__)

DEFAULT_ANGLES = 8


def default_angles(count: int = DEFAULT_ANGLES) -> List[float]:
    """`count` equally spaced angles in [0, 2 pi)"""
    return [2.0 * np.pi * k / count for k in range(count)]


def rotation_matrix(t: float) -> np.ndarray:
    return np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])


def largest_disc(grid: Grid2D) -> float:
    """Radius of the largest disc centred at the parameter origin inside the grid"""
    radius = min(-grid.u_min, grid.u_max, -grid.v_min, grid.v_max)
    if radius <= 0:
        raise DomainError("Parameter origin is not inside the grid", {"grid": grid.to_dict()})
    return float(radius)


def inscribed_grid(grid: Grid2D, disc_radius: float) -> Grid2D:
    """
    Square grid inscribed in the disc, sharing the spacing of `grid` and
    centred at the origin so its nodes sit on nodes of `grid` when the
    origin does.
    """
    half = disc_radius / np.sqrt(2.0)
    ku = int(np.floor(half / grid.hu + 1e-9))
    kv = int(np.floor(half / grid.hv + 1e-9))
    if ku < 1 or kv < 1:
        raise DomainError(f"Disc of radius {disc_radius} holds no grid cell")
    return Grid2D(-ku * grid.hu, ku * grid.hu, -kv * grid.hv, kv * grid.hv, 2 * ku + 1, 2 * kv + 1)


@dataclass
class FamilyMember:
    """One member M_t of the associated family"""

    t: float
    surface: SurfaceS3
    nu_t: NormalCurvatureField
    residual_max: float = 0.0


@dataclass
class FamilyBuild:
    """Members that passed their gates, plus one failure record per dropped angle"""

    members: List[FamilyMember] = field(default_factory=list)
    failures: List[Dict[str, Any]] = field(default_factory=list)

    def member(self, t: float) -> FamilyMember:
        for m in self.members:
            if np.isclose(m.t, t):
                return m
        raise KeyError(t)


def rotate_solution(nu: NormalCurvatureField, t: float,
                    disc_radius: Optional[float] = None) -> NormalCurvatureField:
    """
    Sample nu_t(u, v) = nu(cos t u - sin t v, sin t u + cos t v)

    Bicubic interpolation of ln(nu) is evaluated at the rotated nodes of the
    square grid inscribed in the disc, then exponentiated so nu_t stays
    positive.

    Args:
        nu: Solution on a grid containing the parameter origin
        t: Rotation angle
        disc_radius: Disc radius (defaults to the largest centred disc)

    Returns:
        NormalCurvatureField on the inscribed grid

    Raises:
        DomainError: If the disc leaves the grid
    """
    grid = nu.grid
    available = largest_disc(grid)
    radius = available if disc_radius is None else float(disc_radius)
    if radius <= 0 or radius > available * (1.0 + 1e-12):
        raise DomainError(
            f"Disc of radius {radius} exceeds the domain (largest centred disc {available})",
            {"disc_radius": radius, "available": available},
        )

    target = inscribed_grid(grid, radius)
    U, V = target.mesh()
    c, s = np.cos(t), np.sin(t)
    f_t = sample_points(nu.f, c * U - s * V, s * U + c * V)
    return NormalCurvatureField(ScalarField(target, np.exp(f_t)))


def family_gate(grid: Grid2D, residual_gate: float, gate_factor: float) -> float:
    """Interpolation leaves an O(h^2) residual, so members are gated at max(gate, factor h^2)"""
    return max(residual_gate, gate_factor * grid.h ** 2)


def _build_member(nu: NormalCurvatureField, t: float, frame0: Optional[np.ndarray],
                  disc_radius: Optional[float], gate: float,
                  allow_degenerate: bool) -> FamilyMember:
    nu_t = rotate_solution(nu, t, disc_radius)
    node = nu_t.grid.center_index()
    initial = InitialFrame(np.eye(4) if frame0 is None else frame0, node)
    rebuilt = reconstruct_surface(nu_t, initial=initial, gate=gate, allow_degenerate=allow_degenerate)
    return FamilyMember(t=t, surface=rebuilt.surface, nu_t=nu_t, residual_max=rebuilt.residual_max)


def build_family(nu: NormalCurvatureField, ts: Sequence[float], frame0: Optional[np.ndarray] = None,
                 disc_radius: Optional[float] = None, gate: Optional[float] = None,
                 residual_gate: float = 1e-8, gate_factor: float = 20.0, threads: int = 1,
                 allow_degenerate: bool = False) -> FamilyBuild:
    """
    Reconstruct M_t for every angle from one shared initial frame

    Members are independent and built on a thread pool. A member whose
    rotated field fails its gates is recorded in `failures` and the rest of
    the family is still built.

    Args:
        nu: Base solution
        ts: Angles
        frame0: Shared 4x4 initial frame, placed at the centre of every member grid
        disc_radius: Common disc radius
        gate: Residual gate per member (defaults to family_gate)
        residual_gate: Lower bound of the default gate
        gate_factor: Factor of h^2 in the default gate
        threads: Worker count
        allow_degenerate: Accept fields that are not strongly regular

    Returns:
        FamilyBuild with members sorted by angle
    """
    disc_grid = inscribed_grid(nu.grid, largest_disc(nu.grid) if disc_radius is None else disc_radius)
    member_gate = family_gate(disc_grid, residual_gate, gate_factor) if gate is None else gate
    result = FamilyBuild()

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as executor:
        futures = {
            executor.submit(_build_member, nu, float(t), frame0, disc_radius, member_gate, allow_degenerate): float(t)
            for t in ts
        }
        for future in as_completed(futures):
            t = futures[future]
            try:
                result.members.append(future.result())
                logger.info(f"Family member t={t:.6f} built")
            except BonnetError as e:
                logger.warning(f"Family member t={t:.6f} dropped: {e.message}")
                record = handle_exception(e, "associated_family")
                record["t"] = t
                result.failures.append(record)

    result.members.sort(key=lambda m: m.t)
    result.failures.sort(key=lambda r: r["t"])
    return result


@dataclass
class IsometryReport:
    """Metric comparison of two family members on their common disc"""

    t: float
    e_deviation: float
    g_deviation: float
    f_max: float
    metric_deviation: float
    gate: float

    @property
    def passed(self) -> bool:
        return max(self.e_deviation, self.g_deviation, self.f_max, self.metric_deviation) < self.gate

    def to_dict(self) -> Dict[str, Any]:
        return {
            "t": self.t,
            "e_deviation": self.e_deviation,
            "g_deviation": self.g_deviation,
            "f_max": self.f_max,
            "metric_deviation": self.metric_deviation,
            "gate": self.gate,
            "passed": self.passed,
        }


def verify_isometry(base: FamilyMember, other: FamilyMember, gate: Optional[float] = None,
                    gate_factor: float = 20.0, margin: int = 2) -> IsometryReport:
    """
    Compare E, G of `other` with those of `base` at rotated arguments

    Only nodes inside the disc inscribed in the base grid are compared, so the
    rotated points stay where the base metric is known.

    Args:
        base: Reference member
        other: Member to compare
        gate: Pass bound (defaults to gate_factor h^2)
        gate_factor: Factor of h^2 in the default gate
        margin: Boundary ring excluded from the comparison

    Returns:
        IsometryReport
    """
    grid = other.surface.grid
    base_forms = fundamental_forms(base.surface, check_normal=False)
    forms = fundamental_forms(other.surface, check_normal=False)

    dt = other.t - base.t
    U, V = grid.mesh()
    c, s = np.cos(dt), np.sin(dt)
    Ur, Vr = c * U - s * V, s * U + c * V

    bgrid = base.surface.grid
    inner = min(-bgrid.u_min, bgrid.u_max, -bgrid.v_min, bgrid.v_max) - margin * bgrid.h
    mask = (np.hypot(U, V) <= inner + 1e-12) & grid.interior_mask(margin)
    if not mask.any():
        raise DomainError("Members share no common disc")

    E_rot = sample_points(base_forms.E, Ur, Vr)
    G_rot = sample_points(base_forms.G, Ur, Vr)
    e_dev = float(np.max(np.abs(forms.E.values - E_rot)[mask]))
    g_dev = float(np.max(np.abs(forms.G.values - G_rot)[mask]))
    f_max = float(max(np.max(np.abs(forms.F.values)[mask]),
                      np.max(np.abs(base_forms.F.values)[bgrid.interior_mask(margin)])))
    metric_dev = float(np.max(np.abs(forms.E.values - 1.0 / other.nu_t.nu.values)[mask]))

    gate = gate_factor * grid.h ** 2 if gate is None else gate
    report = IsometryReport(other.t, e_dev, g_dev, f_max, metric_dev, gate)
    logger.info(f"Isometry t={other.t:.6f}: E dev {e_dev:.3e}, G dev {g_dev:.3e}, "
                f"passed={report.passed}")
    return report
