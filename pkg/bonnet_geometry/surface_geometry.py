"""
Surface geometry module
Measures a discrete surface z = l(u, v) in S^3: fundamental forms, the four
invariants nu1, nu2, gamma1, gamma2, the Codazzi and Gauss residuals, and the
passage to canonical principal parameters.

Sign convention: N completes (X, Y, N, l) to a right-handed frame of R^4,
with X = l_u/sqrt(E), Y = l_v/sqrt(G), and e = l_uu . N.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from .grid_core import (
    Grid2D,
    ScalarField,
    VectorField4,
    integrate_along_u,
    integrate_along_v,
    partial_u,
    partial_uu,
    partial_uv,
    partial_v,
    partial_vv,
    sample_points,
)
from .utils.error_utils import (
    DomainError,
    PrincipalNetError,
    RegularityError,
    SeparabilityError,
    SingularityError,
)

logger = logging.getLogger(__name__)

# Regularizer in the |f| / sqrt(|e g|) principal-net measure
PRINCIPAL_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class SurfaceS3:
    """A surface in the unit 3-sphere with an optional unit normal field"""

    grid: Grid2D
    l: VectorField4
    N: Optional[VectorField4] = None
    unit_tol: float = 1e-8

    def __post_init__(self):
        if self.l.grid != self.grid or (self.N is not None and self.N.grid != self.grid):
            raise DomainError("Surface fields must live on the surface grid")
        defect = np.abs(np.linalg.norm(self.l.values, axis=-1) - 1.0)
        if defect.max() > self.unit_tol:
            i, j = np.unravel_index(int(np.argmax(defect)), defect.shape)
            raise DomainError(
                f"Position leaves the unit sphere by {defect.max():.3e}",
                {"node": [int(i), int(j)], "defect": float(defect.max())},
            )

    @classmethod
    def from_array(cls, grid: Grid2D, l: np.ndarray, N: Optional[np.ndarray] = None) -> "SurfaceS3":
        return cls(grid, VectorField4(grid, l), None if N is None else VectorField4(grid, N))


@dataclass
class SurfaceInvariants:
    """Fundamental forms, invariants and derived curvatures of a SurfaceS3"""

    E: ScalarField
    F: ScalarField
    G: ScalarField
    e: ScalarField
    f: ScalarField
    g: ScalarField
    N: Optional[VectorField4] = None
    nu1: Optional[ScalarField] = None
    nu2: Optional[ScalarField] = None
    gamma1: Optional[ScalarField] = None
    gamma2: Optional[ScalarField] = None
    mean_curvature: Optional[ScalarField] = None
    gauss_curvature: Optional[ScalarField] = None

    @property
    def grid(self) -> Grid2D:
        return self.E.grid

    def principal_net_defect(self) -> float:
        """max(|F|/sqrt(EG), |f|/sqrt(|e g| + eps)) over all nodes"""
        E, F, G = self.E.values, self.F.values, self.G.values
        e, f, g = self.e.values, self.f.values, self.g.values
        metric = np.abs(F) / np.sqrt(E * G)
        second = np.abs(f) / np.sqrt(np.abs(e * g) + PRINCIPAL_EPS)
        return float(max(metric.max(), second.max()))


def _first_bad_node(mask: np.ndarray) -> list:
    i, j = np.argwhere(mask)[0]
    return [int(i), int(j)]


def _oriented_normal(l: np.ndarray, lu: np.ndarray, lv: np.ndarray) -> np.ndarray:
    """Unit normal completing (l_u, l_v, N, l) to a right-handed basis"""
    stack = np.stack([l, lu, lv], axis=-2)
    _, _, vh = np.linalg.svd(stack, full_matrices=True)
    normal = vh[..., 3, :]
    frame = np.stack([lu, lv, normal, l], axis=-2)
    sign = np.sign(np.linalg.det(frame))
    sign[sign == 0] = 1.0
    return normal * sign[..., None]


def fundamental_forms(s: SurfaceS3, check_normal: bool = True, normal_tol: float = 1e-6,
                      rank_tol: float = 1e-8) -> SurfaceInvariants:
    """
    First and second fundamental forms of a surface in S^3

    Args:
        s: Surface; its normal is recomputed if absent
        check_normal: Verify a supplied normal is unit and orthogonal to l, l_u, l_v
        normal_tol: Tolerance of that check
        rank_tol: Relative singular-value threshold for l_u, l_v independence

    Returns:
        SurfaceInvariants with E, F, G, e, f, g and N filled

    Raises:
        RegularityError: If l_u and l_v are dependent at some node
        DomainError: If a supplied normal fails the check
    """
    l = s.l
    lu, lv = partial_u(l), partial_v(l)
    luu, luv, lvv = partial_uu(l), partial_uv(l), partial_vv(l)

    sv = np.linalg.svd(np.stack([lu.values, lv.values], axis=-2), compute_uv=False)
    degenerate = (sv[..., 0] == 0.0) | (sv[..., 1] <= rank_tol * np.maximum(sv[..., 0], 1e-300))
    if degenerate.any():
        raise RegularityError(
            "Tangent vectors l_u, l_v are linearly dependent",
            {"node": _first_bad_node(degenerate)},
        )

    if s.N is None:
        normal = _oriented_normal(l.values, lu.values, lv.values)
    else:
        normal = s.N.values
        if check_normal:
            unit_u = lu.values / np.linalg.norm(lu.values, axis=-1, keepdims=True)
            unit_v = lv.values / np.linalg.norm(lv.values, axis=-1, keepdims=True)
            defect = np.max(np.abs(np.stack([
                np.linalg.norm(normal, axis=-1) - 1.0,
                np.einsum("ijk,ijk->ij", normal, l.values),
                np.einsum("ijk,ijk->ij", normal, unit_u),
                np.einsum("ijk,ijk->ij", normal, unit_v),
            ])), axis=0)
            if defect.max() > normal_tol:
                raise DomainError(
                    f"Supplied normal is not a unit normal (defect {defect.max():.3e})",
                    {"node": _first_bad_node(defect > normal_tol), "defect": float(defect.max())},
                )
    N = VectorField4(s.grid, normal, (lu.valid & lv.valid) if s.N is None else s.N.valid)

    forms = SurfaceInvariants(
        E=lu.dot(lu), F=lu.dot(lv), G=lv.dot(lv),
        e=luu.dot(N), f=luv.dot(N), g=lvv.dot(N),
        N=N,
    )
    det = forms.E.values * forms.G.values - forms.F.values ** 2
    if (det <= 0).any():
        raise RegularityError("First fundamental form is not positive definite",
                              {"node": _first_bad_node(det <= 0)})
    return forms


def invariants(s: SurfaceS3, principal_tol: float = 1e-4, check_normal: bool = True,
               normal_tol: float = 1e-6) -> SurfaceInvariants:
    """
    The four invariants plus mean and Gauss curvature

        nu1 = e/E, nu2 = g/G, gamma1 = -E_v/(2E sqrt G), gamma2 = G_u/(2G sqrt E)
        H = (nu1 + nu2)/2, K = 1 + nu1 nu2

    Args:
        s: Surface in principal parameters
        principal_tol: Bound on the principal-net defect
        check_normal: Forwarded to fundamental_forms
        normal_tol: Forwarded to fundamental_forms

    Returns:
        Fully populated SurfaceInvariants

    Raises:
        PrincipalNetError: If the parametric net is not principal; reparameterize first
    """
    forms = fundamental_forms(s, check_normal=check_normal, normal_tol=normal_tol)
    defect = forms.principal_net_defect()
    if defect >= principal_tol:
        raise PrincipalNetError(
            f"Parameters are not principal (defect {defect:.3e} >= {principal_tol:.1e}); "
            "reparameterize along curvature lines first",
            {"defect": defect, "tolerance": principal_tol},
        )

    E, G = forms.E.values, forms.G.values
    nu1 = forms.e.values / E
    nu2 = forms.g.values / G
    E_v, G_u = partial_v(forms.E), partial_u(forms.G)
    gamma1 = -E_v.values / (2.0 * E * np.sqrt(G))
    gamma2 = G_u.values / (2.0 * G * np.sqrt(E))

    grid = s.grid
    metric_valid = forms.E.valid & forms.G.valid
    nu1_valid = forms.e.valid & metric_valid
    nu2_valid = forms.g.valid & metric_valid
    forms.nu1 = ScalarField(grid, nu1, nu1_valid)
    forms.nu2 = ScalarField(grid, nu2, nu2_valid)
    forms.gamma1 = ScalarField(grid, gamma1, E_v.valid & metric_valid)
    forms.gamma2 = ScalarField(grid, gamma2, G_u.valid & metric_valid)
    forms.mean_curvature = ScalarField(grid, 0.5 * (nu1 + nu2), nu1_valid & nu2_valid)
    forms.gauss_curvature = ScalarField(grid, 1.0 + nu1 * nu2, nu1_valid & nu2_valid)
    return forms


def mean_curvature(forms: SurfaceInvariants) -> ScalarField:
    """Mean curvature (eG - 2fF + gE) / (2(EG - F^2)); valid in any parameters"""
    E, F, G = forms.E.values, forms.F.values, forms.G.values
    e, f, g = forms.e.values, forms.f.values, forms.g.values
    return ScalarField(forms.grid, (e * G - 2.0 * f * F + g * E) / (2.0 * (E * G - F ** 2)))


def _require_invariants(inv: SurfaceInvariants) -> None:
    if inv.nu1 is None or inv.gamma1 is None:
        raise DomainError("Invariants are not populated; call invariants() first")


def codazzi_residual(inv: SurfaceInvariants, singular_tol: float = 1e-10) -> Tuple[ScalarField, ScalarField]:
    """
    Residuals of the Codazzi equations

        gamma1 - (nu1)_v / (sqrt G (nu1 - nu2))
        gamma2 - (nu2)_u / (sqrt E (nu1 - nu2))

    Args:
        inv: Populated invariants
        singular_tol: Smallest admissible |nu1 - nu2|

    Returns:
        Two residual fields; nodes reached by one-sided closures are masked

    Raises:
        SingularityError: At an umbilic node
    """
    _require_invariants(inv)
    gap = inv.nu1.values - inv.nu2.values
    umbilic = np.abs(gap) < singular_tol
    if umbilic.any():
        raise SingularityError("Umbilic node: nu1 = nu2", {"node": _first_bad_node(umbilic)})

    grid = inv.grid
    nu1_v, nu2_u = partial_v(inv.nu1), partial_u(inv.nu2)
    shared = inv.nu1.valid & inv.nu2.valid
    mask1 = inv.gamma1.valid & nu1_v.valid & inv.G.valid & shared
    mask2 = inv.gamma2.valid & nu2_u.valid & inv.E.valid & shared
    r1 = inv.gamma1.values - nu1_v.values / (np.sqrt(inv.G.values) * gap)
    r2 = inv.gamma2.values - nu2_u.values / (np.sqrt(inv.E.values) * gap)
    return (
        ScalarField(grid, np.where(mask1, r1, 0.0), mask1),
        ScalarField(grid, np.where(mask2, r2, 0.0), mask2),
    )


def gauss_residual(inv: SurfaceInvariants) -> ScalarField:
    """Left minus right side of (gamma1)_v/sqrt G - (gamma2)_u/sqrt E - (gamma1^2 + gamma2^2) = 1 + nu1 nu2"""
    _require_invariants(inv)
    grid = inv.grid
    g1_v, g2_u = partial_v(inv.gamma1), partial_u(inv.gamma2)
    mask = g1_v.valid & g2_u.valid & inv.nu1.valid & inv.nu2.valid
    g1, g2 = inv.gamma1.values, inv.gamma2.values
    lhs = (
        g1_v.values / np.sqrt(inv.G.values)
        - g2_u.values / np.sqrt(inv.E.values)
        - (g1 ** 2 + g2 ** 2)
    )
    rhs = 1.0 + inv.nu1.values * inv.nu2.values
    return ScalarField(grid, np.where(mask, lhs - rhs, 0.0), mask)


def intrinsic_gauss_curvature(inv: SurfaceInvariants) -> ScalarField:
    """Gauss curvature from E and G alone (orthogonal net)"""
    grid = inv.grid
    root = np.sqrt(inv.E.values * inv.G.values)
    E_v, G_u = partial_v(inv.E), partial_u(inv.G)
    term_v = partial_v(ScalarField(grid, E_v.values / root, E_v.valid & inv.G.valid))
    term_u = partial_u(ScalarField(grid, G_u.values / root, G_u.valid & inv.E.valid))
    mask = term_v.valid & term_u.valid
    return ScalarField(grid, np.where(mask, -(term_v.values + term_u.values) / (2.0 * root), 0.0), mask)


def rotate_surface(s: SurfaceS3, rotation: np.ndarray) -> SurfaceS3:
    """Apply an orthogonal map of R^4 to position and normal"""
    rotation = np.asarray(rotation, dtype=float)
    l = s.l.values @ rotation.T
    N = None if s.N is None else s.N.values @ rotation.T
    return SurfaceS3.from_array(s.grid, l, N)


def swap_parameters(s: SurfaceS3) -> SurfaceS3:
    """The surface l(v, u) on the transposed grid; a supplied normal is carried over unchanged"""
    grid = s.grid.transposed()
    l = VectorField4(grid, np.swapaxes(s.l.values, 0, 1), s.l.valid.T)
    N = None if s.N is None else VectorField4(grid, np.swapaxes(s.N.values, 0, 1), s.N.valid.T)
    return SurfaceS3(grid, l, N, s.unit_tol)


def order_principal(s: SurfaceS3, principal_tol: float = 1e-4, check_normal: bool = True,
                    normal_tol: float = 1e-6) -> Tuple[SurfaceS3, SurfaceInvariants, bool]:
    """
    Invariants with nu1 - nu2 > 0

    When nu1 < nu2 at every valid node, X and Y are exchanged by transposing
    the parameters while N is kept, so nu1 and nu2 trade places and the frame
    (X, Y, N, l) reverses its handedness. Fields where nu1 - nu2 changes sign
    are returned as measured.

    Returns:
        (surface, invariants, swapped)
    """
    inv = invariants(s, principal_tol, check_normal, normal_tol)
    both = inv.nu1.valid & inv.nu2.valid
    gap = (inv.nu1.values - inv.nu2.values)[both]
    if gap.size == 0 or not np.all(gap < 0.0):
        return s, inv, False

    swapped = swap_parameters(SurfaceS3(s.grid, s.l, inv.N, s.unit_tol))
    logger.info(f"nu1 < nu2 on all {gap.size} valid nodes; exchanged X and Y")
    return swapped, invariants(swapped, principal_tol, check_normal=False), True


def canonical_reparameterize(s: SurfaceS3, inv: SurfaceInvariants,
                             origin: Optional[Tuple[int, int]] = None,
                             minimality_tol: float = 1e-4,
                             separability_tol: float = 1e-3) -> SurfaceS3:
    """
    Resample a minimal surface onto canonical principal parameters

    Uses ubar = integral of sqrt(nu E) du and vbar = integral of sqrt(nu G) dv
    with nu = (nu1 - nu2)/2, then bicubic resampling onto a uniform
    (ubar, vbar) grid with the same node counts.

    Args:
        s: Minimal surface in principal parameters
        inv: Its populated invariants
        origin: Node where ubar = vbar = 0 (defaults to the grid centre)
        minimality_tol: Bound on |nu1 + nu2|
        separability_tol: Bound on the relative variation of sqrt(nu E) along v
            and of sqrt(nu G) along u

    Returns:
        SurfaceS3 on the canonical grid (normal recomputed downstream)

    Raises:
        DomainError: If the surface is not minimal or nu <= 0
        SeparabilityError: If the integrands depend on the wrong variable
    """
    _require_invariants(inv)
    grid = s.grid
    i0, j0 = grid.center_index() if origin is None else origin

    mean_defect = float(np.max(np.abs(inv.nu1.values + inv.nu2.values)))
    if mean_defect >= minimality_tol:
        raise DomainError(
            f"Surface is not minimal: max |nu1 + nu2| = {mean_defect:.3e}",
            {"mean_defect": mean_defect},
        )
    nu = 0.5 * (inv.nu1.values - inv.nu2.values)
    if (nu <= 0).any():
        raise DomainError("Canonical parameters need nu > 0", {"node": _first_bad_node(nu <= 0)})

    a = np.sqrt(nu * inv.E.values)
    b = np.sqrt(nu * inv.G.values)
    var_a = float(np.max((a.max(axis=1) - a.min(axis=1)) / a.mean(axis=1)))
    var_b = float(np.max((b.max(axis=0) - b.min(axis=0)) / b.mean(axis=0)))
    if var_a >= separability_tol or var_b >= separability_tol:
        raise SeparabilityError(
            f"sqrt(nu E) varies along v by {var_a:.3e} or sqrt(nu G) along u by {var_b:.3e}",
            {"variation_u_integrand": var_a, "variation_v_integrand": var_b},
        )

    ubar = integrate_along_u(ScalarField(grid, a), v_index=j0, u0_index=i0)
    vbar = integrate_along_v(ScalarField(grid, b), u_index=i0, v0_index=j0)

    new_grid = Grid2D(float(ubar[0]), float(ubar[-1]), float(vbar[0]), float(vbar[-1]), grid.nu, grid.nv)
    u_of_ubar = CubicSpline(ubar, grid.u)(new_grid.u)
    v_of_vbar = CubicSpline(vbar, grid.v)(new_grid.v)
    Uq, Vq = np.meshgrid(u_of_ubar, v_of_vbar, indexing="ij")
    l = sample_points(s.l, Uq, Vq)
    l /= np.linalg.norm(l, axis=-1, keepdims=True)

    logger.info(f"Canonical reparameterization onto [{new_grid.u_min:.4f}, {new_grid.u_max:.4f}] x "
                f"[{new_grid.v_min:.4f}, {new_grid.v_max:.4f}]")
    return SurfaceS3.from_array(new_grid, l)


# ---------------------------------------------------------------------------
# Analytic test surfaces
# ---------------------------------------------------------------------------

def clifford_torus(grid: Grid2D, scale: float = 1.0) -> SurfaceS3:
    """l = (cos su, sin su, cos sv, sin sv)/sqrt 2; scale sqrt(2) gives canonical parameters"""
    U, V = grid.mesh()
    l = np.stack([np.cos(scale * U), np.sin(scale * U), np.cos(scale * V), np.sin(scale * V)], axis=-1)
    return SurfaceS3.from_array(grid, l / np.sqrt(2.0))


def great_sphere(grid: Grid2D) -> SurfaceS3:
    """Totally geodesic 2-sphere l = (cos u cos v, cos u sin v, sin u, 0)"""
    U, V = grid.mesh()
    l = np.stack([np.cos(U) * np.cos(V), np.cos(U) * np.sin(V), np.sin(U), np.zeros_like(U)], axis=-1)
    return SurfaceS3.from_array(grid, l)


def small_sphere(grid: Grid2D, height: float = 0.5) -> SurfaceS3:
    """Totally umbilic small sphere at fourth coordinate `height`"""
    U, V = grid.mesh()
    rho = np.sqrt(1.0 - height ** 2)
    l = np.stack([
        rho * np.cos(U) * np.cos(V),
        rho * np.cos(U) * np.sin(V),
        rho * np.sin(U),
        np.full_like(U, height),
    ], axis=-1)
    return SurfaceS3.from_array(grid, l)
