"""
Frame integrator module
Builds the connection matrices of the moving frame (X, Y, N, l) from the four
invariants, measures their integrability, and integrates the frame over the
grid to realize the surface l(u, v) in S^3.

With the frame stored as the rows of a 4x4 matrix F = [X; Y; N; l]:

    F_u = A F,  F_v = B F,  integrable iff  B_u - A_v = AB - BA

    X_u = sqrt(E) (gamma1 Y + nu1 N - l)     X_v = sqrt(G) gamma2 Y
    Y_u = -sqrt(E) gamma1 X                  Y_v = sqrt(G) (-gamma2 X + nu2 N - l)
    N_u = -sqrt(E) nu1 X                     N_v = -sqrt(G) nu2 Y
    l_u = sqrt(E) X                          l_v = sqrt(G) Y
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from .grid_core import Grid2D, ScalarField, VectorField4, derivative_mask, diff1, partial_u, partial_v
from .sinh_poisson import NormalCurvatureField, certify_strong_regularity, residual
from .surface_geometry import SurfaceInvariants, SurfaceS3, fundamental_forms
from .utils.error_utils import (
    DomainError,
    GateError,
    RegularityError,
    SingularityError,
    StepFailureError,
)

logger = logging.getLogger(__name__)

X_ROW, Y_ROW, N_ROW, L_ROW = 0, 1, 2, 3

SKEW_TOL = 1e-13
INITIAL_FRAME_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class InvariantData:
    """The four invariants nu1, nu2, gamma1, gamma2 on a common grid"""

    nu1: ScalarField
    nu2: ScalarField
    gamma1: ScalarField
    gamma2: ScalarField

    @property
    def grid(self) -> Grid2D:
        return self.nu1.grid

    @classmethod
    def canonical(cls, nu: NormalCurvatureField) -> "InvariantData":
        """
        Invariants of the minimal surface with normal curvature nu in canonical
        parameters: nu1 = nu, nu2 = -nu, gamma1 = (sqrt nu)_v, gamma2 = -(sqrt nu)_u.
        The square-root derivatives use the chain rule on differences of nu.
        """
        grid = nu.grid
        field = nu.nu
        root = np.sqrt(field.values)
        nu_u, nu_v = partial_u(field), partial_v(field)
        return cls(
            nu1=field,
            nu2=field.with_values(-field.values),
            gamma1=ScalarField(grid, nu_v.values / (2.0 * root), nu_v.valid),
            gamma2=ScalarField(grid, -nu_u.values / (2.0 * root), nu_u.valid),
        )

    @classmethod
    def from_surface(cls, inv: SurfaceInvariants) -> "InvariantData":
        return cls(inv.nu1, inv.nu2, inv.gamma1, inv.gamma2)

    def crop(self, window: Grid2D) -> "InvariantData":
        su, sv = self.grid.window_slices(window)
        return InvariantData(*(ScalarField(window, f.values[su, sv], f.valid[su, sv])
                               for f in (self.nu1, self.nu2, self.gamma1, self.gamma2)))

    def check(self) -> None:
        """
        Verify nu1 - nu2 > 0, gamma1 (nu1)_v > 0 and gamma2 (nu2)_u > 0 at every node

        Raises:
            DomainError: Naming the failing node and condition
        """
        grid = self.grid
        _check_conditions(self, diff1(self.nu1.values, grid.hv, 1), diff1(self.nu2.values, grid.hu, 0))


@dataclass(frozen=True, eq=False)
class CoefficientMatrices:
    """
    Per-node skew-symmetric generators A (u-direction) and B (v-direction)

    `valid` marks the nodes whose entries come from central differences only;
    it is all True when omitted.
    """

    grid: Grid2D
    A: np.ndarray
    B: np.ndarray
    strongly_regular: bool = True
    valid: Optional[np.ndarray] = None

    def __post_init__(self):
        expected = self.grid.shape + (4, 4)
        if self.A.shape != expected or self.B.shape != expected:
            raise DomainError(f"Coefficient matrices must have shape {expected}")
        valid = np.ones(self.grid.shape, dtype=bool) if self.valid is None else np.asarray(self.valid, dtype=bool)
        if valid.shape != self.grid.shape:
            raise DomainError("Validity mask does not match grid")
        object.__setattr__(self, "valid", valid)

    def skew_defect(self) -> float:
        return float(max(
            np.max(np.abs(self.A + np.swapaxes(self.A, -1, -2))),
            np.max(np.abs(self.B + np.swapaxes(self.B, -1, -2))),
        ))

    @classmethod
    def zeros(cls, grid: Grid2D) -> "CoefficientMatrices":
        return cls(grid, np.zeros(grid.shape + (4, 4)), np.zeros(grid.shape + (4, 4)), False)


def _assemble(grid: Grid2D, sqrt_e: np.ndarray, sqrt_g: np.ndarray, nu1: np.ndarray,
              nu2: np.ndarray, gamma1: np.ndarray, gamma2: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    A = np.zeros(grid.shape + (4, 4))
    B = np.zeros(grid.shape + (4, 4))

    def couple(M, r, c, value):
        M[..., r, c] = value
        M[..., c, r] = -value

    couple(A, X_ROW, Y_ROW, sqrt_e * gamma1)
    couple(A, X_ROW, N_ROW, sqrt_e * nu1)
    couple(A, X_ROW, L_ROW, -sqrt_e)
    couple(B, X_ROW, Y_ROW, sqrt_g * gamma2)
    couple(B, Y_ROW, N_ROW, sqrt_g * nu2)
    couple(B, Y_ROW, L_ROW, -sqrt_g)
    return A, B


def build_matrices_canonical(nu: NormalCurvatureField) -> CoefficientMatrices:
    """
    Connection matrices in canonical parameters

    nu1 = nu, nu2 = -nu, gamma1 = (sqrt nu)_v, gamma2 = -(sqrt nu)_u and
    sqrt(E) = sqrt(G) = 1/sqrt(nu). Constant nu is accepted and flagged as not
    strongly regular.

    Args:
        nu: Positive normal-curvature field

    Returns:
        CoefficientMatrices, exactly skew-symmetric
    """
    inv = InvariantData.canonical(nu)
    scale = 1.0 / np.sqrt(nu.nu.values)
    A, B = _assemble(nu.grid, scale, scale, inv.nu1.values, inv.nu2.values,
                     inv.gamma1.values, inv.gamma2.values)
    regular = certify_strong_regularity(nu) > 0.0
    if not regular:
        logger.warning("Normal-curvature field is not strongly regular; matrices built anyway")
    valid = inv.gamma1.valid & inv.gamma2.valid
    return CoefficientMatrices(nu.grid, A, B, strongly_regular=regular, valid=valid)


def build_matrices_general(inv: InvariantData, window: Optional[Grid2D] = None) -> CoefficientMatrices:
    """
    Connection matrices of a strongly regular surface from its four invariants

        sqrt(E) = (nu2)_u / (gamma2 (nu1 - nu2)),  sqrt(G) = (nu1)_v / (gamma1 (nu1 - nu2))

    Args:
        inv: Invariant fields
        window: Optional node-aligned window; derivatives are taken on the full
            grid and the result is restricted to the window

    Returns:
        CoefficientMatrices on the window grid

    Raises:
        DomainError: If condition 1 fails at some node
    """
    grid = inv.grid
    d_nu1_v = diff1(inv.nu1.values, grid.hv, 1)
    d_nu2_u = diff1(inv.nu2.values, grid.hu, 0)
    valid = (
        derivative_mask(inv.nu1.valid, 1) & derivative_mask(inv.nu2.valid, 0)
        & inv.gamma1.valid & inv.gamma2.valid
    )
    if window is not None:
        su, sv = grid.window_slices(window)
        d_nu1_v, d_nu2_u = d_nu1_v[su, sv], d_nu2_u[su, sv]
        valid = valid[su, sv]
        inv = inv.crop(window)
        grid = window
    _check_conditions(inv, d_nu1_v, d_nu2_u)

    gap = inv.nu1.values - inv.nu2.values
    sqrt_e = d_nu2_u / (inv.gamma2.values * gap)
    sqrt_g = d_nu1_v / (inv.gamma1.values * gap)
    A, B = _assemble(grid, sqrt_e, sqrt_g, inv.nu1.values, inv.nu2.values,
                     inv.gamma1.values, inv.gamma2.values)
    return CoefficientMatrices(grid, A, B, strongly_regular=True, valid=valid)


def _check_conditions(inv: InvariantData, d_nu1_v: np.ndarray, d_nu2_u: np.ndarray) -> None:
    conditions = (
        ("nu1 - nu2 > 0", inv.nu1.values - inv.nu2.values),
        ("gamma1 (nu1)_v > 0", inv.gamma1.values * d_nu1_v),
        ("gamma2 (nu2)_u > 0", inv.gamma2.values * d_nu2_u),
    )
    for name, values in conditions:
        bad = np.argwhere(values <= 0.0)
        if bad.size:
            i, j = int(bad[0][0]), int(bad[0][1])
            raise DomainError(
                f"Condition 1 violated: {name} fails at node ({i}, {j})",
                {"condition": name, "node": [i, j], "value": float(values[i, j])},
            )


def compatibility_residual(m: CoefficientMatrices) -> ScalarField:
    """
    Frobenius norm of B_u - A_v - (AB - BA)

    Args:
        m: Coefficient matrices

    Returns:
        Residual field, masked wherever a difference quotient of A or B
        reaches an invalid node or a one-sided closure
    """
    grid = m.grid
    B_u = diff1(m.B, grid.hu, 0)
    A_v = diff1(m.A, grid.hv, 1)
    commutator = m.A @ m.B - m.B @ m.A
    norm = np.linalg.norm(B_u - A_v - commutator, axis=(-2, -1))
    mask = derivative_mask(m.valid, 0) & derivative_mask(m.valid, 1)
    return ScalarField(grid, np.where(mask, norm, 0.0), mask)


def theorem_conditions(inv: InvariantData) -> Dict[str, ScalarField]:
    """
    Term-by-term residuals of the integrability conditions in invariant form

        (ln((nu1)_v / gamma1))_u - (nu1)_u / (nu1 - nu2)
        (ln((nu2)_u / gamma2))_v + (nu2)_v / (nu1 - nu2)
        (nu1 - nu2)/2 ((gamma1^2)_v/(nu1)_v - (gamma2^2)_u/(nu2)_u) - (gamma1^2 + gamma2^2) - (1 + nu1 nu2)

    Raises:
        SingularityError: If (nu1)_v or (nu2)_u vanishes (not strongly regular)
    """
    grid = inv.grid
    nu1, nu2 = inv.nu1, inv.nu2
    g1, g2 = inv.gamma1, inv.gamma2
    d1v, d2u = partial_v(nu1), partial_u(nu2)
    if (np.any(d1v.values == 0.0) or np.any(d2u.values == 0.0)
            or np.any(g1.values == 0.0) or np.any(g2.values == 0.0)):
        raise SingularityError("Term-by-term conditions need a strongly regular surface")
    gap = nu1.values - nu2.values
    shared = nu1.valid & nu2.valid

    with np.errstate(invalid="ignore", divide="ignore"):
        log1 = partial_u(ScalarField(grid, np.log(np.abs(d1v.values / g1.values)), d1v.valid & g1.valid))
        log2 = partial_v(ScalarField(grid, np.log(np.abs(d2u.values / g2.values)), d2u.valid & g2.valid))
        nu1_u, nu2_v = partial_u(nu1), partial_v(nu2)
        sq1_v = partial_v(ScalarField(grid, g1.values ** 2, g1.valid))
        sq2_u = partial_u(ScalarField(grid, g2.values ** 2, g2.valid))
        c1 = log1.values - nu1_u.values / gap
        c2 = log2.values + nu2_v.values / gap
        c3 = (
            0.5 * gap * (sq1_v.values / d1v.values - sq2_u.values / d2u.values)
            - (g1.values ** 2 + g2.values ** 2) - (1.0 + nu1.values * nu2.values)
        )
    masks = (
        log1.valid & nu1_u.valid & shared,
        log2.valid & nu2_v.valid & shared,
        sq1_v.valid & sq2_u.valid & d1v.valid & d2u.valid & shared,
    )
    return {
        name: ScalarField(grid, np.where(mask, values, 0.0), mask)
        for name, values, mask in zip(("condition_2_1_u", "condition_2_1_v", "condition_2_2"), (c1, c2, c3), masks)
    }


@dataclass
class CompatibilityReport:
    """Integrability residual plus optional term-by-term diagnostics"""

    residual: ScalarField
    max_residual: float
    mean_residual: float
    gate: Optional[float]
    conditions: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.gate is None or self.max_residual < self.gate


def compatibility_report(m: CoefficientMatrices, inv: Optional[InvariantData] = None,
                         gate: Optional[float] = None, margin: int = 1) -> CompatibilityReport:
    """
    Compatibility residual with max/mean summaries and, when the invariants are
    strongly regular, the term-by-term condition residuals.
    """
    res = compatibility_residual(m)
    conditions: Dict[str, float] = {}
    if inv is not None:
        try:
            conditions = {k: v.max_abs(margin) for k, v in theorem_conditions(inv).items()}
        except SingularityError:
            logger.debug("Skipping term-by-term conditions for degenerate invariants")
    return CompatibilityReport(res, res.max_abs(margin), res.mean_abs(margin), gate, conditions)


@dataclass(frozen=True, eq=False)
class InitialFrame:
    """Right-oriented orthonormal frame rows (X, Y, N, l) at a grid node"""

    frame: np.ndarray
    node: Tuple[int, int]

    def __post_init__(self):
        frame = np.asarray(self.frame, dtype=float)
        if frame.shape != (4, 4):
            raise DomainError("Initial frame must be 4x4")
        if np.max(np.abs(frame @ frame.T - np.eye(4))) > INITIAL_FRAME_TOL:
            raise DomainError("Initial frame is not orthonormal")
        if np.linalg.det(frame) <= 0:
            raise DomainError("Initial frame is not right-oriented")
        object.__setattr__(self, "frame", frame)
        object.__setattr__(self, "node", (int(self.node[0]), int(self.node[1])))

    @classmethod
    def identity(cls, grid: Grid2D, node: Optional[Tuple[int, int]] = None) -> "InitialFrame":
        return cls(np.eye(4), grid.center_index() if node is None else node)


@dataclass(frozen=True, eq=False)
class FrameField:
    """Frame rows (X, Y, N, l) at every node; values have shape (nu, nv, 4, 4)"""

    grid: Grid2D
    values: np.ndarray
    max_drift: float = 0.0

    def _row(self, k: int) -> VectorField4:
        return VectorField4(self.grid, self.values[..., k, :])

    @property
    def X(self) -> VectorField4:
        return self._row(X_ROW)

    @property
    def Y(self) -> VectorField4:
        return self._row(Y_ROW)

    @property
    def N(self) -> VectorField4:
        return self._row(N_ROW)

    @property
    def l(self) -> VectorField4:
        return self._row(L_ROW)

    def gram_defect(self) -> float:
        gram = self.values @ np.swapaxes(self.values, -1, -2)
        return float(np.max(np.abs(gram - np.eye(4))))

    def determinants(self) -> np.ndarray:
        return np.linalg.det(self.values)

    def unit_sphere_defect(self) -> float:
        return float(np.max(np.abs(np.linalg.norm(self.values[..., L_ROW, :], axis=-1) - 1.0)))

    def surface(self) -> SurfaceS3:
        return SurfaceS3(self.grid, self.l, self.N)


def project_to_so4(frames: np.ndarray) -> np.ndarray:
    """Modified Gram-Schmidt on the rows via QR with positive diagonal"""
    q, r = np.linalg.qr(np.swapaxes(frames, -1, -2))
    signs = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    signs[signs == 0] = 1.0
    return np.swapaxes(q * signs[..., None, :], -1, -2)


def _sweep(generators: np.ndarray, coords: np.ndarray, start: int, frame0: np.ndarray,
           drift_tol: float, node_of) -> Tuple[np.ndarray, float]:
    """
    RK4 transport F' = M(s) F along axis 0 of `generators` (n, batch, 4, 4)
    from index `start` in both directions, re-projecting onto SO(4) each step.
    Midpoint generators come from a cubic spline along the sweep.
    """
    n = generators.shape[0]
    out = np.empty((n,) + frame0.shape)
    out[start] = frame0
    max_drift = 0.0
    spline = CubicSpline(coords, generators, axis=0) if n > 1 else None
    identity = np.eye(4)

    for direction in (1, -1):
        F = frame0
        k = start
        while 0 <= k + direction < n:
            h = coords[k + direction] - coords[k]
            M0 = generators[k]
            Mh = spline(coords[k] + 0.5 * h)
            M1 = generators[k + direction]
            k1 = M0 @ F
            k2 = Mh @ (F + 0.5 * h * k1)
            k3 = Mh @ (F + 0.5 * h * k2)
            k4 = M1 @ (F + h * k3)
            F_new = F + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

            drift = np.max(np.abs(F_new @ np.swapaxes(F_new, -1, -2) - identity), axis=(-2, -1))
            worst = int(np.argmax(drift))
            max_drift = max(max_drift, float(drift[worst]))
            if drift[worst] > drift_tol:
                raise StepFailureError(
                    f"Orthonormality drift {drift[worst]:.3e} exceeds {drift_tol:.1e}",
                    {"node": list(node_of(k + direction, worst)), "drift": float(drift[worst])},
                )
            F = project_to_so4(F_new)
            k += direction
            out[k] = F
    return out, max_drift


def _integrate(P: np.ndarray, Q: np.ndarray, p_coords: np.ndarray, q_coords: np.ndarray,
               p0: int, q0: int, frame0: np.ndarray, drift_tol: float, node_of) -> Tuple[np.ndarray, float]:
    """Sweep axis 0 along line q0, then axis 1 from every node of that line"""
    line, drift_line = _sweep(P[:, q0][:, None], p_coords, p0, frame0[None], drift_tol,
                              lambda k, b: node_of(k, q0))
    line = line[:, 0]
    line[p0] = frame0
    full, drift_cols = _sweep(np.swapaxes(Q, 0, 1), q_coords, q0, line, drift_tol,
                              lambda k, b: node_of(b, k))
    return np.swapaxes(full, 0, 1), max(drift_line, drift_cols)


def integrate_frame(m: CoefficientMatrices, initial: InitialFrame, drift_tol: float = 1e-3,
                    order: str = "uv") -> FrameField:
    """
    Integrate F_u = A F, F_v = B F from an initial frame

    With order "uv" the frame is carried along the initial row (u-direction)
    and then up and down every column (v-direction); "vu" swaps the roles.
    Columns are swept together as one batch.

    Args:
        m: Coefficient matrices
        initial: Initial frame and node
        drift_tol: Largest tolerated deviation from orthonormality in one step
        order: "uv" or "vu"

    Returns:
        FrameField whose value at the initial node is the initial frame

    Raises:
        StepFailureError: If a step drifts beyond drift_tol
    """
    grid = m.grid
    i0, j0 = initial.node
    if not (0 <= i0 < grid.nu and 0 <= j0 < grid.nv):
        raise DomainError(f"Initial node {initial.node} outside grid")
    if order == "uv":
        values, drift = _integrate(m.A, m.B, grid.u, grid.v, i0, j0, initial.frame, drift_tol,
                                   lambda i, j: (i, j))
    elif order == "vu":
        values, drift = _integrate(np.swapaxes(m.B, 0, 1), np.swapaxes(m.A, 0, 1), grid.v, grid.u,
                                   j0, i0, initial.frame, drift_tol, lambda j, i: (i, j))
        values = np.swapaxes(values, 0, 1)
    else:
        raise DomainError(f"Unknown integration order: {order}")
    values = np.ascontiguousarray(values)
    values[i0, j0] = initial.frame
    logger.debug(f"Frame integrated ({order}), max drift before projection {drift:.3e}")
    return FrameField(grid, values, max_drift=drift)


def far_corner(grid: Grid2D, node: Tuple[int, int], inset: int = 1) -> Tuple[int, int]:
    """Corner node opposite `node`, `inset` nodes in from the boundary"""
    i0, j0 = node
    return (grid.nu - 1 - inset if i0 < grid.nu / 2 else inset,
            grid.nv - 1 - inset if j0 < grid.nv / 2 else inset)


def path_disagreement(m: CoefficientMatrices, initial: InitialFrame, drift_tol: float = 1e-3,
                      inset: int = 1) -> float:
    """
    Operator-norm distance between the far-corner frames reached by
    u-first and v-first integration from the same initial node

    The corner sits `inset` nodes inside the grid so neither path runs along
    an edge whose generators come from one-sided closures.
    """
    first = integrate_frame(m, initial, drift_tol, order="uv")
    second = integrate_frame(m, initial, drift_tol, order="vu")
    i, j = far_corner(m.grid, initial.node, inset)
    return float(np.linalg.norm(first.values[i, j] - second.values[i, j], 2))


def frame_from_surface(s: SurfaceS3, check_normal: bool = True) -> FrameField:
    """Rebuild (X, Y, N, l) from a surface in principal parameters"""
    forms = fundamental_forms(s, check_normal=check_normal)
    X = partial_u(s.l).values / np.sqrt(forms.E.values)[..., None]
    Y = partial_v(s.l).values / np.sqrt(forms.G.values)[..., None]
    return FrameField(s.grid, np.stack([X, Y, forms.N.values, s.l.values], axis=-2))


def _residual_on_window(nu: NormalCurvatureField, window: Grid2D) -> float:
    res = residual(nu)
    su, sv = nu.grid.window_slices(window)
    values = res.values[su, sv][res.valid[su, sv]]
    return float(np.max(np.abs(values))) if values.size else 0.0


def certified_window(nu: NormalCurvatureField, gate: float, min_nodes: int = 5) -> Grid2D:
    """
    Largest centred window on which the residual gate holds and nu_u nu_v != 0

    Raises:
        RegularityError: If no window with at least min_nodes per axis passes
    """
    grid = nu.grid
    k = 0
    while grid.nu - 2 * k >= min_nodes and grid.nv - 2 * k >= min_nodes:
        window = grid.window(k, grid.nu - 1 - k, k, grid.nv - 1 - k)
        if _residual_on_window(nu, window) < gate and certify_strong_regularity(nu, window) > 0.0:
            logger.info(f"Certified window [{window.u_min:.4f}, {window.u_max:.4f}] x "
                        f"[{window.v_min:.4f}, {window.v_max:.4f}]")
            return window
        k += 1
    raise RegularityError("No centred window passes the residual and strong-regularity gates",
                          {"gate": gate})


@dataclass
class Reconstruction:
    """Surface rebuilt from a normal-curvature field"""

    frame: FrameField
    surface: SurfaceS3
    window: Grid2D
    matrices: CoefficientMatrices
    residual_max: float
    strongly_regular: bool


def reconstruct_surface(nu: NormalCurvatureField, initial: Optional[InitialFrame] = None,
                        gate: float = 1e-8, window: Optional[Grid2D] = None,
                        allow_degenerate: bool = False, drift_tol: float = 1e-3) -> Reconstruction:
    """
    Minimal surface in S^3 with canonical invariants given by nu

    Checks the residual gate on the window before any integration, builds the
    canonical matrices and integrates the frame; the surface is its l row.

    Args:
        nu: Normal-curvature field
        initial: Initial frame (identity at the grid centre by default)
        gate: Bound on the sinh-Poisson residual over the window
        window: Window to certify; searched for when omitted
        allow_degenerate: Accept fields with nu_u nu_v = 0 (e.g. constant nu)
        drift_tol: Per-step orthonormality drift bound

    Returns:
        Reconstruction with frame, surface, window and matrices

    Raises:
        GateError: If the residual gate fails on the window
        RegularityError: If the window is not strongly regular
    """
    grid = nu.grid
    initial = initial or InitialFrame.identity(grid)

    if window is None:
        if allow_degenerate and certify_strong_regularity(nu) == 0.0:
            window = grid
        else:
            window = certified_window(nu, gate)

    residual_max = _residual_on_window(nu, window)
    if residual_max >= gate:
        raise GateError(
            f"sinh-Poisson residual {residual_max:.3e} exceeds gate {gate:.1e}",
            {"residual_max": residual_max, "gate": gate},
        )
    margin = certify_strong_regularity(nu, window)
    if margin <= 0.0:
        if not allow_degenerate:
            raise RegularityError("nu_u nu_v vanishes on the window", {"margin": margin})
        logger.warning("Reconstructing from a field that is not strongly regular")

    matrices = build_matrices_canonical(nu)
    frame = integrate_frame(matrices, initial, drift_tol)
    logger.info(f"Reconstructed surface on {grid.nu}x{grid.nv} grid, "
                f"Gram defect {frame.gram_defect():.2e}")
    return Reconstruction(
        frame=frame,
        surface=frame.surface(),
        window=window,
        matrices=matrices,
        residual_max=residual_max,
        strongly_regular=margin > 0.0,
    )
