"""
Grid core module
Uniform parametric grids, scalar and vector fields over them, and the
finite-difference calculus shared by every pipeline.

Arrays are indexed [i, j] with i along u and j along v, so a scalar field on
an nu x nv grid has shape (nu, nv) and a vector field has shape (nu, nv, d).
"""

import csv
import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Tuple, Union

import numpy as np
import sympy
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import RectBivariateSpline
from scipy.ndimage import binary_erosion

from .utils.error_utils import ConfigError, DimensionError, DomainError

logger = logging.getLogger(__name__)

# Minimum nodes per axis for any finite-difference stencil
MIN_STENCIL_NODES = 3


@dataclass(frozen=True)
class Grid2D:
    """Uniform rectangular grid over [u_min, u_max] x [v_min, v_max]"""

    u_min: float
    u_max: float
    v_min: float
    v_max: float
    nu: int
    nv: int

    def __post_init__(self):
        for name in ("u_min", "u_max", "v_min", "v_max"):
            if not np.isfinite(getattr(self, name)):
                raise DomainError(f"Grid bound {name} must be finite")
        if int(self.nu) != self.nu or int(self.nv) != self.nv or self.nu < 2 or self.nv < 2:
            raise DimensionError(
                f"Grid needs at least 2 nodes per axis, got {self.nu}x{self.nv}",
                {"nu": self.nu, "nv": self.nv},
            )
        if not (self.u_max > self.u_min and self.v_max > self.v_min):
            raise DomainError("Grid bounds must satisfy u_max > u_min and v_max > v_min")

    @property
    def hu(self) -> float:
        return (self.u_max - self.u_min) / (self.nu - 1)

    @property
    def hv(self) -> float:
        return (self.v_max - self.v_min) / (self.nv - 1)

    @property
    def h(self) -> float:
        """Largest spacing, used to scale O(h^2) gates"""
        return max(self.hu, self.hv)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.nu, self.nv)

    @property
    def u(self) -> np.ndarray:
        return np.linspace(self.u_min, self.u_max, self.nu)

    @property
    def v(self) -> np.ndarray:
        return np.linspace(self.v_min, self.v_max, self.nv)

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        """Return (U, V) coordinate arrays of shape (nu, nv)"""
        return np.meshgrid(self.u, self.v, indexing="ij")

    def node(self, i: int, j: int) -> Tuple[float, float]:
        """Map node (i, j) to its parameter coordinates"""
        if not (0 <= i < self.nu and 0 <= j < self.nv):
            raise DimensionError(f"Node ({i}, {j}) outside {self.nu}x{self.nv} grid")
        # matches np.linspace, which pins the last node to the upper bound
        u = self.u_max if i == self.nu - 1 else self.u_min + i * self.hu
        v = self.v_max if j == self.nv - 1 else self.v_min + j * self.hv
        return (u, v)

    def nearest_index(self, u: float, v: float) -> Tuple[int, int]:
        """Return the node closest to (u, v), clipped to the grid"""
        i = int(np.clip(round((u - self.u_min) / self.hu), 0, self.nu - 1))
        j = int(np.clip(round((v - self.v_min) / self.hv), 0, self.nv - 1))
        return (i, j)

    def center_index(self) -> Tuple[int, int]:
        return ((self.nu - 1) // 2, (self.nv - 1) // 2)

    def contains(self, u: float, v: float, eps: float = 1e-12) -> bool:
        return (self.u_min - eps <= u <= self.u_max + eps) and (self.v_min - eps <= v <= self.v_max + eps)

    def window(self, i0: int, i1: int, j0: int, j1: int) -> "Grid2D":
        """Sub-grid on the node range [i0, i1] x [j0, j1] (inclusive)"""
        if not (0 <= i0 < i1 < self.nu and 0 <= j0 < j1 < self.nv):
            raise DimensionError(f"Window [{i0},{i1}]x[{j0},{j1}] outside grid")
        u0, v0 = self.node(i0, j0)
        u1, v1 = self.node(i1, j1)
        return Grid2D(u0, u1, v0, v1, i1 - i0 + 1, j1 - j0 + 1)

    def transposed(self) -> "Grid2D":
        """The same grid with the roles of u and v exchanged"""
        return Grid2D(self.v_min, self.v_max, self.u_min, self.u_max, self.nv, self.nu)

    def window_slices(self, window: "Grid2D") -> Tuple[slice, slice]:
        """Index slices of this grid covered by a node-aligned window"""
        i0 = int(round((window.u_min - self.u_min) / self.hu))
        j0 = int(round((window.v_min - self.v_min) / self.hv))
        i1 = i0 + window.nu - 1
        j1 = j0 + window.nv - 1
        if i0 < 0 or j0 < 0 or i1 >= self.nu or j1 >= self.nv:
            raise DomainError("Window lies outside the grid", {"window": window.to_dict()})
        return slice(i0, i1 + 1), slice(j0, j1 + 1)

    def interior_mask(self, margin: int = 1) -> np.ndarray:
        """Boolean mask of nodes at least `margin` nodes away from the boundary"""
        mask = np.zeros(self.shape, dtype=bool)
        if self.nu > 2 * margin and self.nv > 2 * margin:
            mask[margin:self.nu - margin, margin:self.nv - margin] = True
        return mask

    def to_dict(self) -> Dict[str, Any]:
        return {
            "u_min": float(self.u_min),
            "u_max": float(self.u_max),
            "v_min": float(self.v_min),
            "v_max": float(self.v_max),
            "nu": int(self.nu),
            "nv": int(self.nv),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Grid2D":
        try:
            return cls(
                float(data["u_min"]), float(data["u_max"]),
                float(data["v_min"]), float(data["v_max"]),
                int(data["nu"]), int(data["nv"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"Malformed grid description: {str(e)}")

    @classmethod
    def parse(cls, spec: str) -> "Grid2D":
        """
        Parse "u_min,u_max,v_min,v_max,nu,nv"

        Args:
            spec: Comma-separated grid description

        Returns:
            Grid2D
        """
        parts = [p.strip() for p in spec.split(",")]
        if len(parts) != 6:
            raise ConfigError(f"Grid spec needs 6 comma-separated values, got: {spec}")
        try:
            return cls(float(parts[0]), float(parts[1]), float(parts[2]), float(parts[3]),
                       int(parts[4]), int(parts[5]))
        except ValueError as e:
            raise ConfigError(f"Malformed grid spec {spec}: {str(e)}")


def _full_mask(grid: Grid2D) -> np.ndarray:
    return np.ones(grid.shape, dtype=bool)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real samples at every node of a grid, with a validity mask"""

    grid: Grid2D
    values: np.ndarray
    valid: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1 and values.size == self.grid.nu * self.grid.nv:
            values = values.reshape(self.grid.shape)
        if values.shape != self.grid.shape:
            raise DimensionError(
                f"Field shape {values.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.isfinite(values))[0]
            raise DomainError("Field has non-finite values", {"node": [int(bad[0]), int(bad[1])]})
        valid = _full_mask(self.grid) if self.valid is None else np.asarray(self.valid, dtype=bool)
        if valid.shape != self.grid.shape:
            raise DimensionError("Validity mask does not match grid")
        values = values.copy()
        values.setflags(write=False)
        valid = valid.copy()
        valid.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @classmethod
    def from_function(cls, grid: Grid2D, func: Callable[[np.ndarray, np.ndarray], Any]) -> "ScalarField":
        U, V = grid.mesh()
        return cls(grid, np.broadcast_to(np.asarray(func(U, V), dtype=float), grid.shape))

    @classmethod
    def constant(cls, grid: Grid2D, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    def with_values(self, values: np.ndarray, valid: Optional[np.ndarray] = None) -> "ScalarField":
        return ScalarField(self.grid, values, self.valid if valid is None else valid)

    def masked(self, margin: int = 0) -> np.ndarray:
        """Values at valid nodes at least `margin` nodes from the boundary"""
        mask = self.valid.copy()
        if margin > 0:
            mask &= self.grid.interior_mask(margin)
        return self.values[mask]

    def max_abs(self, margin: int = 0) -> float:
        vals = self.masked(margin)
        return float(np.max(np.abs(vals))) if vals.size else 0.0

    def mean_abs(self, margin: int = 0) -> float:
        vals = self.masked(margin)
        return float(np.mean(np.abs(vals))) if vals.size else 0.0


@dataclass(frozen=True, eq=False)
class VectorField:
    """R^d-valued samples at every node; values have shape (nu, nv, d)"""

    grid: Grid2D
    values: np.ndarray
    valid: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 2 and values.shape[0] == self.grid.nu * self.grid.nv:
            values = values.reshape(self.grid.nu, self.grid.nv, values.shape[1])
        if values.ndim != 3 or values.shape[:2] != self.grid.shape:
            raise DimensionError(
                f"Vector field shape {values.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.all(np.isfinite(values), axis=-1))[0]
            raise DomainError("Vector field has non-finite values", {"node": [int(bad[0]), int(bad[1])]})
        valid = _full_mask(self.grid) if self.valid is None else np.asarray(self.valid, dtype=bool)
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    @classmethod
    def from_function(cls, grid: Grid2D, func: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "VectorField":
        """Build from func(U, V) returning an array of shape (nu, nv, d)"""
        U, V = grid.mesh()
        return cls(grid, func(U, V))

    def component(self, k: int) -> ScalarField:
        return ScalarField(self.grid, self.values[..., k], self.valid)

    def norm(self) -> ScalarField:
        return ScalarField(self.grid, np.linalg.norm(self.values, axis=-1), self.valid)

    def dot(self, other: "VectorField") -> ScalarField:
        return ScalarField(self.grid, np.einsum("ijk,ijk->ij", self.values, other.values),
                           self.valid & other.valid)


class VectorField4(VectorField):
    """R^4-valued field (positions and frame vectors of surfaces in S^3)"""

    def __post_init__(self):
        super().__post_init__()
        if self.dim != 4:
            raise DimensionError(f"VectorField4 needs 4 components, got {self.dim}")


Field = Union[ScalarField, VectorField]


# ---------------------------------------------------------------------------
# Array-level stencils; work on any trailing shape
# ---------------------------------------------------------------------------

def _require_nodes(n: int, axis_name: str) -> None:
    if n < MIN_STENCIL_NODES:
        raise DimensionError(
            f"Finite differences along {axis_name} need at least {MIN_STENCIL_NODES} nodes, got {n}",
            {"axis": axis_name, "nodes": n},
        )


def diff1(arr: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Second-order first derivative with one-sided boundary closures"""
    _require_nodes(arr.shape[axis], "u" if axis == 0 else "v")
    return np.gradient(arr, h, axis=axis, edge_order=2)


def diff2(arr: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Second derivative: 3-point interior, 4-point one-sided boundary closure"""
    n = arr.shape[axis]
    _require_nodes(n, "u" if axis == 0 else "v")
    a = np.moveaxis(np.asarray(arr, dtype=float), axis, 0)
    out = np.empty_like(a)
    out[1:-1] = (a[2:] - 2.0 * a[1:-1] + a[:-2]) / h ** 2
    if n >= 4:
        out[0] = (2.0 * a[0] - 5.0 * a[1] + 4.0 * a[2] - a[3]) / h ** 2
        out[-1] = (2.0 * a[-1] - 5.0 * a[-2] + 4.0 * a[-3] - a[-4]) / h ** 2
    else:
        out[0] = out[1]
        out[-1] = out[1]
    return np.moveaxis(out, 0, axis)


def laplacian_array(arr: np.ndarray, hu: float, hv: float) -> np.ndarray:
    """5-point Laplacian at interior nodes; boundary entries are zero"""
    _require_nodes(arr.shape[0], "u")
    _require_nodes(arr.shape[1], "v")
    out = np.zeros_like(np.asarray(arr, dtype=float))
    out[1:-1, 1:-1] = (
        (arr[2:, 1:-1] - 2.0 * arr[1:-1, 1:-1] + arr[:-2, 1:-1]) / hu ** 2
        + (arr[1:-1, 2:] - 2.0 * arr[1:-1, 1:-1] + arr[1:-1, :-2]) / hv ** 2
    )
    return out


_U_LINE = np.array([[1], [1], [1]], dtype=bool)
_V_LINE = np.array([[1, 1, 1]], dtype=bool)
_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def _erode(valid: np.ndarray, structure: np.ndarray) -> np.ndarray:
    return binary_erosion(valid, structure=structure, border_value=0)


def derivative_mask(valid: np.ndarray, axis: int) -> np.ndarray:
    """
    Validity of a difference quotient along `axis`

    A node stays valid when its whole stencil is valid and it is not an end
    node of the axis, where the one-sided closure has its own error constant.
    Each nested difference along the same axis peels one more ring.

    Args:
        valid: Validity mask of the differentiated data
        axis: 0 for u, 1 for v

    Returns:
        Eroded mask
    """
    return _erode(np.asarray(valid, dtype=bool), _U_LINE if axis == 0 else _V_LINE)


def _rewrap(field: Field, values: np.ndarray, valid: np.ndarray) -> Field:
    if isinstance(field, ScalarField):
        return ScalarField(field.grid, values, valid)
    return type(field)(field.grid, values, valid)


# ---------------------------------------------------------------------------
# Field-level operators
# ---------------------------------------------------------------------------

def partial_u(field: Field) -> Field:
    """
    Derivative along u

    Central differences at interior nodes, second-order one-sided closures at
    the boundary. Works for scalar and vector fields.

    Args:
        field: Scalar or vector field

    Returns:
        Field of the same kind on the same grid
    """
    values = diff1(field.values, field.grid.hu, axis=0)
    return _rewrap(field, values, derivative_mask(field.valid, 0))


def partial_v(field: Field) -> Field:
    """Derivative along v; see partial_u"""
    values = diff1(field.values, field.grid.hv, axis=1)
    return _rewrap(field, values, derivative_mask(field.valid, 1))


def partial_uu(field: Field) -> Field:
    values = diff2(field.values, field.grid.hu, axis=0)
    return _rewrap(field, values, derivative_mask(field.valid, 0))


def partial_vv(field: Field) -> Field:
    values = diff2(field.values, field.grid.hv, axis=1)
    return _rewrap(field, values, derivative_mask(field.valid, 1))


def partial_uv(field: Field) -> Field:
    return partial_v(partial_u(field))


def laplacian(field: ScalarField) -> ScalarField:
    """
    5-point Laplacian f_uu + f_vv

    Boundary nodes are flagged invalid and hold zero so they never enter
    residual norms.

    Args:
        field: Scalar field on a grid with at least 3 nodes per axis

    Returns:
        Laplacian field
    """
    values = laplacian_array(field.values, field.grid.hu, field.grid.hv)
    valid = _erode(field.valid, _CROSS)
    return ScalarField(field.grid, np.where(valid, values, 0.0), valid)


def integrate_along_u(field: ScalarField, v_index: int, u0_index: int) -> np.ndarray:
    """
    Cumulative trapezoid antiderivative along one row of constant v

    Args:
        field: Integrand
        v_index: Row index j
        u0_index: Node where the antiderivative vanishes

    Returns:
        1-D array of length nu
    """
    grid = field.grid
    if not (0 <= v_index < grid.nv and 0 <= u0_index < grid.nu):
        raise DimensionError(f"Index out of range: v_index={v_index}, u0_index={u0_index}")
    row = field.values[:, v_index]
    cumulative = cumulative_trapezoid(row, dx=grid.hu, initial=0.0)
    return cumulative - cumulative[u0_index]


def integrate_along_v(field: ScalarField, u_index: int, v0_index: int) -> np.ndarray:
    """Cumulative trapezoid antiderivative along one column of constant u"""
    grid = field.grid
    if not (0 <= u_index < grid.nu and 0 <= v0_index < grid.nv):
        raise DimensionError(f"Index out of range: u_index={u_index}, v0_index={v0_index}")
    column = field.values[u_index, :]
    cumulative = cumulative_trapezoid(column, dx=grid.hv, initial=0.0)
    return cumulative - cumulative[v0_index]


# ---------------------------------------------------------------------------
# Bicubic resampling
# ---------------------------------------------------------------------------

def _spline(grid: Grid2D, values: np.ndarray) -> RectBivariateSpline:
    kx = min(3, grid.nu - 1)
    ky = min(3, grid.nv - 1)
    return RectBivariateSpline(grid.u, grid.v, values, kx=kx, ky=ky, s=0)


class FieldInterpolant:
    """Bicubic interpolant of a scalar or vector field, one spline per component"""

    def __init__(self, field: Field):
        self.grid = field.grid
        self.scalar = isinstance(field, ScalarField)
        values = field.values[..., None] if self.scalar else field.values
        self._splines = [_spline(field.grid, values[..., k]) for k in range(values.shape[-1])]

    def __call__(self, uq: Any, vq: Any) -> np.ndarray:
        uq, vq = np.broadcast_arrays(np.asarray(uq, dtype=float), np.asarray(vq, dtype=float))
        out = np.stack(
            [s.ev(uq.ravel(), vq.ravel()).reshape(uq.shape) for s in self._splines], axis=-1
        )
        return out[..., 0] if self.scalar else out


def sample_points(field: Field, uq: np.ndarray, vq: np.ndarray) -> np.ndarray:
    """
    Evaluate the bicubic interpolant of a field at scattered points

    Args:
        field: Scalar or vector field
        uq: u coordinates (any shape)
        vq: v coordinates (same shape as uq)

    Returns:
        Array of shape uq.shape (scalar) or uq.shape + (d,) (vector)
    """
    return FieldInterpolant(field)(uq, vq)


def resample(field: Field, new_grid: Grid2D) -> Field:
    """Bicubic resampling of a field onto the nodes of another grid"""
    U, V = new_grid.mesh()
    values = sample_points(field, U, V)
    if isinstance(field, ScalarField):
        return ScalarField(new_grid, values)
    return type(field)(new_grid, values)


# ---------------------------------------------------------------------------
# Expressions and serialization
# ---------------------------------------------------------------------------

def field_from_expression(grid: Grid2D, expression: str) -> ScalarField:
    """
    Evaluate a closed-form expression in u and v on the grid

    Args:
        grid: Target grid
        expression: e.g. "0.1*sin(pi*u)*sin(pi*v)"

    Returns:
        ScalarField
    """
    u, v = sympy.symbols("u v", real=True)
    try:
        expr = sympy.sympify(expression, locals={"u": u, "v": v})
    except (sympy.SympifyError, SyntaxError, TypeError) as e:
        raise ConfigError(f"Cannot parse expression '{expression}': {str(e)}")
    unknown = expr.free_symbols - {u, v}
    if unknown:
        raise ConfigError(f"Expression uses unknown symbols: {sorted(str(s) for s in unknown)}")
    func = sympy.lambdify((u, v), expr, modules="numpy")
    return ScalarField.from_function(grid, func)


def field_to_dict(field: Field, quantity: Optional[str] = None) -> Dict[str, Any]:
    """
    JSON container {grid, values}; values are row-major with u outermost

    Args:
        field: Scalar or vector field
        quantity: Optional tag such as "f" or "nu"

    Returns:
        JSON-compatible dictionary
    """
    data: Dict[str, Any] = {"grid": field.grid.to_dict()}
    if isinstance(field, ScalarField):
        data["values"] = field.values.reshape(-1).tolist()
    else:
        data["dim"] = field.dim
        data["values"] = field.values.reshape(-1, field.dim).tolist()
    if quantity is not None:
        data["quantity"] = quantity
    return data


def field_from_dict(data: Dict[str, Any]) -> Field:
    """Inverse of field_to_dict"""
    if not isinstance(data, dict) or "grid" not in data or "values" not in data:
        raise ConfigError("Field JSON needs 'grid' and 'values' keys")
    grid = Grid2D.from_dict(data["grid"])
    try:
        values = np.asarray(data["values"], dtype=float)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Malformed field values: {str(e)}")
    try:
        if "dim" in data:
            field_cls = VectorField4 if int(data["dim"]) == 4 else VectorField
            return field_cls(grid, values.reshape(grid.nu, grid.nv, int(data["dim"])))
        return ScalarField(grid, values.reshape(grid.shape))
    except ValueError as e:
        raise ConfigError(f"Field values do not match grid: {str(e)}")


def write_field_csv(field: Field, path: str, precision: int = 12) -> None:
    """Write a field as CSV with header u,v,value (or u,v,c0..c{d-1})"""
    U, V = field.grid.mesh()
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        if isinstance(field, ScalarField):
            writer.writerow(["u", "v", "value"])
        else:
            writer.writerow(["u", "v"] + [f"c{k}" for k in range(field.dim)])
        for i in range(field.grid.nu):
            for j in range(field.grid.nv):
                row = [f"{U[i, j]:.{precision}e}", f"{V[i, j]:.{precision}e}"]
                vals = np.atleast_1d(field.values[i, j])
                row.extend(f"{x:.{precision}e}" for x in vals)
                writer.writerow(row)
