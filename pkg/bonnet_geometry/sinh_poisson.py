"""
sinh-Poisson module
Residuals of the natural equation of minimal strongly regular surfaces in S^3,
a damped Newton solver for its Dirichlet problem and the strong-regularity
certificate of a normal-curvature field.

The equation is carried in two equivalent forms:
    nu form:  Laplacian(ln nu) = 2 (1 - nu^2) / nu
    f form:   Laplacian(f) + 4 sinh(f) = 0,  f = ln nu
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .grid_core import Grid2D, ScalarField, diff1, laplacian, laplacian_array
from .utils.error_utils import DomainError, LinearAlgebraError, NonConvergenceError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class NormalCurvatureField:
    """
    Normal-curvature function nu > 0 of a minimal surface in canonical parameters

    The strong-regularity margin is derived from nu on access, so it can never
    go stale.
    """

    nu: ScalarField

    def __post_init__(self):
        _require_positive(self.nu)

    @classmethod
    def from_f(cls, f: ScalarField) -> "NormalCurvatureField":
        return cls(ScalarField(f.grid, np.exp(f.values)))

    @classmethod
    def constant(cls, grid: Grid2D, value: float = 1.0) -> "NormalCurvatureField":
        return cls(ScalarField.constant(grid, value))

    @property
    def grid(self) -> Grid2D:
        return self.nu.grid

    @property
    def f(self) -> ScalarField:
        return ScalarField(self.grid, np.log(self.nu.values))

    @property
    def strong_regularity_margin(self) -> float:
        return certify_strong_regularity(self)


def _require_positive(nu: ScalarField) -> None:
    bad = np.argwhere(nu.values <= 0.0)
    if bad.size:
        i, j = int(bad[0][0]), int(bad[0][1])
        raise DomainError(
            f"nu must be positive; found {nu.values[i, j]} at node ({i}, {j})",
            {"node": [i, j], "value": float(nu.values[i, j])},
        )


def _as_scalar(nu: Union[NormalCurvatureField, ScalarField]) -> ScalarField:
    return nu.nu if isinstance(nu, NormalCurvatureField) else nu


def residual(nu: Union[NormalCurvatureField, ScalarField]) -> ScalarField:
    """
    Residual Laplacian(ln nu) - 2 (1 - nu^2) / nu

    Args:
        nu: Positive normal-curvature field

    Returns:
        Residual at interior nodes; boundary nodes masked

    Raises:
        DomainError: If nu <= 0 at some node
    """
    field_nu = _as_scalar(nu)
    _require_positive(field_nu)
    lap = laplacian(ScalarField(field_nu.grid, np.log(field_nu.values), field_nu.valid))
    source = 2.0 * (1.0 - field_nu.values ** 2) / field_nu.values
    return lap.with_values(np.where(lap.valid, lap.values - source, 0.0))


def residual_f_form(f: ScalarField) -> ScalarField:
    """
    Residual Laplacian(f) + 4 sinh(f)

    Args:
        f: Field f = ln nu

    Returns:
        Residual at interior nodes; boundary nodes masked
    """
    lap = laplacian(f)
    return lap.with_values(np.where(lap.valid, lap.values + 4.0 * np.sinh(f.values), 0.0))


@dataclass
class SolveResult:
    """Outcome of a Newton solve"""

    f: ScalarField
    iterations: int
    converged: bool
    history: List[Tuple[int, float, float]] = field(default_factory=list)
    convergence_constant: Optional[float] = None

    @property
    def nu(self) -> NormalCurvatureField:
        return NormalCurvatureField.from_f(self.f)

    @property
    def final_residual(self) -> float:
        return self.history[-1][1] if self.history else float("nan")


def _interior_operator(grid: Grid2D) -> sp.csr_matrix:
    """Dirichlet 5-point Laplacian on interior unknowns, u index outermost"""
    mu, mv = grid.nu - 2, grid.nv - 2
    du = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(mu, mu)) / grid.hu ** 2
    dv = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(mv, mv)) / grid.hv ** 2
    return (sp.kron(du, sp.identity(mv)) + sp.kron(sp.identity(mu), dv)).tocsr()


def _interior_residual(f: np.ndarray, grid: Grid2D) -> np.ndarray:
    lap = laplacian_array(f, grid.hu, grid.hv)
    return (lap + 4.0 * np.sinh(f))[1:-1, 1:-1].reshape(-1)


def _quadratic_constant(history: List[Tuple[int, float, float]]) -> Optional[float]:
    """Estimate C in r_{k+1} <= C r_k^2 over the final three iterates"""
    residuals = [r for _, r, _ in history[-3:]]
    ratios = [
        residuals[k + 1] / residuals[k] ** 2
        for k in range(len(residuals) - 1)
        if residuals[k] > 0.0
    ]
    return max(ratios) if ratios else None


def solve(boundary: ScalarField, initial_guess: Optional[ScalarField] = None,
          tol: float = 1e-8, max_iters: int = 20, armijo: float = 1e-4,
          min_step: float = 2.0 ** -20) -> SolveResult:
    """
    Damped Newton solve of Laplacian(f) + 4 sinh(f) = 0 with Dirichlet data

    Boundary values are taken from `boundary` on the outer ring of nodes;
    interior values start from `initial_guess`. Steps are damped by Armijo
    backtracking on the residual 2-norm with halving down to `min_step`.

    Args:
        boundary: Field whose boundary-node values are the Dirichlet data
        initial_guess: Starting interior values (defaults to zero)
        tol: Target max-norm of the interior residual
        max_iters: Newton iteration budget
        armijo: Sufficient-decrease constant
        min_step: Smallest step length tried by the line search

    Returns:
        SolveResult carrying f, iteration count and residual history

    Raises:
        DomainError: On a non-positive tolerance or a grid without interior
        NonConvergenceError: If the budget is exhausted or the line search stalls
        LinearAlgebraError: If the Jacobian solve fails
    """
    if tol <= 0:
        raise DomainError(f"tol must be positive, got {tol}")
    grid = boundary.grid
    if grid.nu < 3 or grid.nv < 3:
        raise DomainError("Dirichlet problem needs interior nodes (>= 3 per axis)")
    if initial_guess is not None and initial_guess.grid != grid:
        raise DomainError("Initial guess must live on the boundary grid")

    f = np.zeros(grid.shape) if initial_guess is None else initial_guess.values.copy()
    interior = grid.interior_mask(1)
    f[~interior] = boundary.values[~interior]

    operator = _interior_operator(grid)
    res = _interior_residual(f, grid)
    res_inf = float(np.max(np.abs(res)))
    history: List[Tuple[int, float, float]] = [(0, res_inf, 0.0)]
    best_f, best_res = f.copy(), res_inf
    logger.debug(f"Newton start: residual_inf={res_inf:.3e}")

    iterations = 0
    while res_inf >= tol:
        if iterations >= max_iters:
            raise NonConvergenceError(
                f"Newton did not converge in {max_iters} iterations (residual {best_res:.3e})",
                {"max_iters": max_iters, "best_residual": best_res},
                best_iterate=ScalarField(grid, best_f),
                history=history,
            )
        iterations += 1

        jacobian = operator + sp.diags(4.0 * np.cosh(f[1:-1, 1:-1].reshape(-1)))
        try:
            step = spsolve(jacobian.tocsc(), -res)
        except Exception as e:
            raise LinearAlgebraError(f"Jacobian solve failed: {str(e)}", {"iteration": iterations})
        if not np.all(np.isfinite(step)):
            raise LinearAlgebraError("Jacobian solve returned non-finite values", {"iteration": iterations})

        norm0 = float(np.linalg.norm(res))
        alpha = 1.0
        while True:
            trial = f.copy()
            trial[1:-1, 1:-1] += alpha * step.reshape(grid.nu - 2, grid.nv - 2)
            trial_res = _interior_residual(trial, grid)
            if np.linalg.norm(trial_res) <= (1.0 - armijo * alpha) * norm0:
                break
            alpha *= 0.5
            if alpha < min_step:
                raise NonConvergenceError(
                    f"Line search stalled at iteration {iterations}",
                    {"iteration": iterations, "best_residual": best_res},
                    best_iterate=ScalarField(grid, best_f),
                    history=history,
                )

        f, res = trial, trial_res
        res_inf = float(np.max(np.abs(res)))
        history.append((iterations, res_inf, alpha))
        logger.debug(f"Newton iteration {iterations}: residual_inf={res_inf:.3e} step={alpha}")
        if res_inf < best_res:
            best_f, best_res = f.copy(), res_inf

    constant = _quadratic_constant(history)
    logger.info(f"sinh-Poisson solve converged in {iterations} iterations (residual {res_inf:.3e})")
    return SolveResult(
        f=ScalarField(grid, f),
        iterations=iterations,
        converged=True,
        history=history,
        convergence_constant=constant,
    )


def certify_strong_regularity(nu: Union[NormalCurvatureField, ScalarField],
                              subdomain: Optional[Grid2D] = None) -> float:
    """
    Minimum of |nu_u nu_v| over the interior of a window

    Derivatives are taken on the full grid and then restricted, so window
    edges do not fall back to one-sided stencils.

    Args:
        nu: Normal-curvature field
        subdomain: Window in parameter coordinates; None means the whole grid

    Returns:
        Margin; a value > 0 certifies strong regularity on the window
    """
    field_nu = _as_scalar(nu)
    grid = field_nu.grid
    product = np.abs(diff1(field_nu.values, grid.hu, 0) * diff1(field_nu.values, grid.hv, 1))

    if subdomain is None:
        mask = grid.interior_mask(1)
    else:
        eps = 1e-9 * grid.h
        if not (grid.contains(subdomain.u_min, subdomain.v_min, eps)
                and grid.contains(subdomain.u_max, subdomain.v_max, eps)):
            raise DomainError("Subdomain lies outside the grid", {"subdomain": subdomain.to_dict()})
        U, V = grid.mesh()
        mask = (
            (U > subdomain.u_min + eps) & (U < subdomain.u_max - eps)
            & (V > subdomain.v_min + eps) & (V < subdomain.v_max - eps)
        )
    if not mask.any():
        return 0.0
    return float(np.min(product[mask]))
