"""
Hypersurface builder module
Type-number-two hypersurfaces of R^{n+1}: ruled constructions over spheres and
minimal surfaces, finite-difference shape-operator spectra, the connection
scalars of the moving frame (X, Y, e_i, N), envelope charts (l, r) and the
residuals of the bi-umbilical and minimal systems written in those charts.

Shape operator sign: eigenvalues are those of h_kl = <d_k d_l X, n> relative to
the metric g_kl = <d_k X, d_l X>, with n oriented along the construction's
predicted normal when one is known.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from .grid_core import (
    FieldInterpolant,
    Grid2D,
    ScalarField,
    VectorField,
    partial_u,
    partial_uu,
    partial_uv,
    partial_v,
    partial_vv,
)
from .surface_geometry import SurfaceS3, fundamental_forms, mean_curvature
from .utils.error_utils import (
    DegenerateEnvelopeError,
    DimensionError,
    DomainError,
    InstabilityError,
    RegularityError,
)

logger = logging.getLogger(__name__)

TYPE_TWO = "type_two"
BI_UMBILICAL = "bi_umbilical"
TYPE_ONE = "type_one"
FLAT = "flat"
OTHER = "other"

KIND_BIUMBILICAL = "biumbilical"
KIND_MINIMAL_R3 = "minimal-r3"
KIND_MINIMAL_S3 = "minimal-s3"
KIND_GENERIC = "generic"

DEFAULT_DOMAIN = Grid2D(-1.0, 1.0, -1.0, 1.0, 81, 81)

# Smallest W^2 = EG - F^2 accepted by the envelope parameterization
ENVELOPE_TOL = 1e-12

ChartFunction = Callable[[Any, Any], np.ndarray]


def _unit(k: int, dim: int) -> np.ndarray:
    e = np.zeros(dim)
    e[k] = 1.0
    return e


def _embed(values: np.ndarray, dim: int) -> np.ndarray:
    """Pad the last axis with zeros up to `dim` components"""
    values = np.asarray(values, dtype=float)
    pad = dim - values.shape[-1]
    if pad < 0:
        raise DimensionError(f"Cannot embed {values.shape[-1]} components into R^{dim}")
    return np.concatenate([values, np.zeros(values.shape[:-1] + (pad,))], axis=-1)


# ---------------------------------------------------------------------------
# Surface charts and hypersurface maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SurfaceChart:
    """
    Analytic surface z(u, v) with its unit normal, in R^3 or in S^3 of R^4

    `position` and `normal` broadcast over arrays of u and v and return
    arrays with a trailing axis of length `ambient_dim`.
    """

    position: ChartFunction
    normal: ChartFunction
    domain: Grid2D
    ambient_dim: int
    name: str = "chart"
    exact: bool = True

    def sample(self, grid: Optional[Grid2D] = None) -> Tuple[np.ndarray, np.ndarray]:
        grid = grid or self.domain
        U, V = grid.mesh()
        return self.position(U, V), self.normal(U, V)

    @classmethod
    def from_surface(cls, s: SurfaceS3) -> "SurfaceChart":
        """Spline-backed chart of a discrete surface in S^3"""
        normal = s.N if s.N is not None else fundamental_forms(s, check_normal=False).N
        position_spline = FieldInterpolant(s.l)
        normal_spline = FieldInterpolant(normal)

        def position(u, v):
            z = position_spline(u, v)
            return z / np.linalg.norm(z, axis=-1, keepdims=True)

        def unit_normal(u, v):
            z = position(u, v)
            N = normal_spline(u, v)
            N = N - np.sum(N * z, axis=-1, keepdims=True) * z
            return N / np.linalg.norm(N, axis=-1, keepdims=True)

        return cls(position, unit_normal, s.grid, 4, name="sampled", exact=False)


def catenoid(domain: Grid2D = DEFAULT_DOMAIN) -> SurfaceChart:
    """z = (cosh u cos v, cosh u sin v, u); principal curvatures +-sech^2 u"""

    def position(u, v):
        return np.stack(np.broadcast_arrays(np.cosh(u) * np.cos(v), np.cosh(u) * np.sin(v), u), axis=-1)

    def normal(u, v):
        return np.stack(np.broadcast_arrays(-np.cos(v), -np.sin(v), np.sinh(u)), axis=-1) / np.asarray(np.cosh(u))[..., None]

    return SurfaceChart(position, normal, domain, 3, name="catenoid")


def helicoid(domain: Grid2D = DEFAULT_DOMAIN) -> SurfaceChart:
    """z = (sinh u cos v, sinh u sin v, v); principal curvatures +-sech^2 u"""

    def position(u, v):
        return np.stack(np.broadcast_arrays(np.sinh(u) * np.cos(v), np.sinh(u) * np.sin(v), v), axis=-1)

    def normal(u, v):
        return np.stack(np.broadcast_arrays(np.sin(v), -np.cos(v), np.sinh(u)), axis=-1) / np.asarray(np.cosh(u))[..., None]

    return SurfaceChart(position, normal, domain, 3, name="helicoid")


def plane(domain: Grid2D = DEFAULT_DOMAIN) -> SurfaceChart:
    def position(u, v):
        u, v = np.broadcast_arrays(u, v)
        return np.stack([u, v, np.zeros_like(u)], axis=-1)

    def normal(u, v):
        u, _ = np.broadcast_arrays(u, v)
        return np.stack([np.zeros_like(u), np.zeros_like(u), np.ones_like(u)], axis=-1)

    return SurfaceChart(position, normal, domain, 3, name="plane")


def mercator_sphere(domain: Grid2D = DEFAULT_DOMAIN) -> SurfaceChart:
    """Conformal chart (sech u cos v, sech u sin v, tanh u) of the unit sphere, outward normal"""

    def position(u, v):
        sech = 1.0 / np.cosh(u)
        return np.stack(np.broadcast_arrays(sech * np.cos(v), sech * np.sin(v), np.tanh(u)), axis=-1)

    return SurfaceChart(position, position, domain, 3, name="sphere")


def clifford_chart(domain: Grid2D = DEFAULT_DOMAIN, scale: float = 1.0) -> SurfaceChart:
    """Clifford torus (cos su, sin su, cos sv, sin sv)/sqrt 2 in S^3 with its unit normal"""

    def position(u, v):
        return np.stack(np.broadcast_arrays(np.cos(scale * u), np.sin(scale * u),
                                            np.cos(scale * v), np.sin(scale * v)), axis=-1) / np.sqrt(2.0)

    def normal(u, v):
        return np.stack(np.broadcast_arrays(np.cos(scale * u), np.sin(scale * u),
                                            -np.cos(scale * v), -np.sin(scale * v)), axis=-1) / np.sqrt(2.0)

    return SurfaceChart(position, normal, domain, 4, name="clifford")


@dataclass(frozen=True, eq=False)
class HypersurfaceMap:
    """
    Parameterized hypersurface X(u, v, w^1..w^{n-2}) in R^{n+1}

    Ruled constructions carry the w = 0 integral surface (`base`) and the
    predicted unit normal, which is constant along each generator.
    """

    kind: str
    n: int
    domain: Grid2D
    evaluate: Callable[[float, float, np.ndarray], np.ndarray]
    normal: Optional[ChartFunction] = None
    base: Optional[ChartFunction] = None
    params: Dict[str, Any] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.n + 1

    def point(self, u: float, v: float, w: Sequence[float]) -> np.ndarray:
        w = np.zeros(self.n - 2) if w is None else np.asarray(w, dtype=float).reshape(self.n - 2)
        return np.asarray(self.evaluate(u, v, w), dtype=float)

    def base_surface(self, grid: Optional[Grid2D] = None) -> VectorField:
        grid = grid or self.domain
        U, V = grid.mesh()
        if self.base is not None:
            return VectorField(grid, self.base(U, V))
        zero = np.zeros(self.n - 2)
        return VectorField(grid, np.array([[self.point(u, v, zero) for v in grid.v] for u in grid.u]))

    @classmethod
    def from_function(cls, func: Callable[[float, float, np.ndarray], np.ndarray], n: int,
                      domain: Grid2D = DEFAULT_DOMAIN) -> "HypersurfaceMap":
        return cls(KIND_GENERIC, n, domain, func)


def _ruled(position: ChartFunction, generators: ChartFunction) -> Callable:
    def evaluate(u, v, w):
        return position(u, v) + np.einsum("...k,...kd->...d", w, generators(u, v))
    return evaluate


def _require_n(n: int) -> None:
    if int(n) != n or n < 3:
        raise DomainError(f"Hypersurface dimension n must be an integer >= 3, got {n}")


def build_biumbilical_from_sphere(radius: float, alpha: float, n: int,
                                  chart: Optional[SurfaceChart] = None) -> HypersurfaceMap:
    """
    Bi-umbilical hypersurface generated by a round sphere S^2(radius)

    With N_bar the sphere normal in R^3 and e = E4 orthogonal to R^3:

        N   =  cos(alpha) N_bar + sin(alpha) e
        e_1 = -sin(alpha) N_bar + cos(alpha) e,   e_k = E_{k+3} for k >= 2
        X   =  z(u, v) + sum_k w^k e_k

    Args:
        radius: Sphere radius r_s > 0
        alpha: Constant rotation angle
        n: Hypersurface dimension (>= 3)
        chart: Unit-sphere chart in R^3 (Mercator by default)

    Returns:
        HypersurfaceMap with predicted normal N
    """
    _require_n(n)
    if radius <= 0:
        raise DomainError(f"Sphere radius must be positive, got {radius}")
    chart = chart or mercator_sphere()
    if chart.ambient_dim != 3:
        raise DomainError("Sphere chart must live in R^3")
    dim = n + 1
    e = _unit(3, dim)
    ca, sa = np.cos(alpha), np.sin(alpha)
    if abs(ca) < 1e-12:
        logger.warning("cos(alpha) = 0: the construction is a hyperplane piece, not type number two")

    def position(u, v):
        return radius * _embed(chart.position(u, v), dim)

    def normal(u, v):
        return ca * _embed(chart.normal(u, v), dim) + sa * e

    def generators(u, v):
        n_bar = _embed(chart.normal(u, v), dim)
        first = -sa * n_bar + ca * e
        rest = [np.broadcast_to(_unit(k, dim), first.shape) for k in range(4, dim)]
        return np.stack([first] + rest, axis=-2)

    return HypersurfaceMap(KIND_BIUMBILICAL, n, chart.domain, _ruled(position, generators),
                           normal=normal, base=position, params={"radius": radius, "alpha": alpha})


def _check_grid(chart: SurfaceChart, nodes: int = 201) -> Grid2D:
    """Grid for minimality checks; analytic charts are sampled finely"""
    d = chart.domain
    if not chart.exact:
        return d
    return Grid2D(d.u_min, d.u_max, d.v_min, d.v_max, max(d.nu, nodes), max(d.nv, nodes))


def _mean_curvature_r3(points: np.ndarray, grid: Grid2D) -> ScalarField:
    """Mean curvature of a surface sampled in R^3"""
    y = VectorField(grid, points)
    yu, yv = partial_u(y).values, partial_v(y).values
    normal = np.cross(yu, yv)
    normal /= np.linalg.norm(normal, axis=-1, keepdims=True)
    E, F, G = (np.sum(a * b, axis=-1) for a, b in ((yu, yu), (yu, yv), (yv, yv)))
    e = np.sum(partial_uu(y).values * normal, axis=-1)
    f = np.sum(partial_uv(y).values * normal, axis=-1)
    g = np.sum(partial_vv(y).values * normal, axis=-1)
    H = (e * G - 2.0 * f * F + g * E) / (2.0 * (E * G - F ** 2))
    mask = grid.interior_mask(2)
    return ScalarField(grid, np.where(mask, H, 0.0), mask)


def build_minimal_from_r3_surface(z: SurfaceChart, n: int, minimality_tol: float = 1e-4) -> HypersurfaceMap:
    """
    Minimal hypersurface z(u, v) + sum w^k b_k over a minimal surface of R^3,
    with b_k = E_{k+3} the constant basis of the orthogonal complement

    Raises:
        DomainError: If the measured mean curvature of z reaches minimality_tol
    """
    _require_n(n)
    if z.ambient_dim != 3:
        raise DomainError("Surface must live in R^3")
    grid = _check_grid(z)
    points, _ = z.sample(grid)
    H = _mean_curvature_r3(points, grid).max_abs()
    if H >= minimality_tol:
        raise DomainError(f"Surface is not minimal: max |H| = {H:.3e}", {"mean_curvature": H})
    if z.name == "plane":
        logger.warning("Plane input gives a flat hypersurface; excluded by nu1 nu2 != 0")

    dim = n + 1
    basis = np.stack([_unit(k, dim) for k in range(3, dim)])

    def position(u, v):
        return _embed(z.position(u, v), dim)

    def normal(u, v):
        return _embed(z.normal(u, v), dim)

    def generators(u, v):
        shape = np.broadcast(np.asarray(u), np.asarray(v)).shape
        return np.broadcast_to(basis, shape + basis.shape)

    return HypersurfaceMap(KIND_MINIMAL_R3, n, z.domain, _ruled(position, generators),
                           normal=normal, base=position, params={"surface": z.name})


def build_minimal_from_s3_surface(s: Union[SurfaceS3, SurfaceChart], n: int, radius: float = 1.0,
                                  minimality_tol: float = 1e-4) -> HypersurfaceMap:
    """
    Minimal hypersurface over a minimal surface z in S^3(radius) of R^4

    The plane orthogonal to span{z_u, z_v, N} is spanned by b_1 = z/radius and
    the constant E_5, ..., E_{n+1}, so X = (1 + w^1/radius) z + sum_{k>=2} w^k E_{k+3}.

    Args:
        s: Discrete surface (spline-backed) or analytic chart in the unit S^3
        n: Hypersurface dimension (>= 3)
        radius: Sphere radius
        minimality_tol: Bound on the measured mean curvature

    Returns:
        HypersurfaceMap; the cone vertex w^1 = -radius is its focal set

    Raises:
        DomainError: If the surface is not minimal
    """
    _require_n(n)
    chart = SurfaceChart.from_surface(s) if isinstance(s, SurfaceS3) else s
    if chart.ambient_dim != 4:
        raise DomainError("Surface must live in S^3 of R^4")

    grid = _check_grid(chart)
    l, N = chart.sample(grid)
    surface = SurfaceS3.from_array(grid, l / np.linalg.norm(l, axis=-1, keepdims=True), N)
    forms = fundamental_forms(surface, check_normal=False)
    H = mean_curvature(forms).max_abs(margin=2 if min(grid.shape) > 4 else 0)
    if H >= minimality_tol:
        raise DomainError(f"Surface is not minimal in S^3: max |H| = {H:.3e}", {"mean_curvature": H})

    dim = n + 1
    fixed = [_unit(k, dim) for k in range(4, dim)]

    def position(u, v):
        return radius * _embed(chart.position(u, v), dim)

    def normal(u, v):
        return _embed(chart.normal(u, v), dim)

    def generators(u, v):
        radial = _embed(chart.position(u, v), dim)
        rest = [np.broadcast_to(e, radial.shape) for e in fixed]
        return np.stack([radial] + rest, axis=-2)

    return HypersurfaceMap(KIND_MINIMAL_S3, n, chart.domain, _ruled(position, generators),
                           normal=normal, base=position, params={"radius": radius, "surface": chart.name})


# ---------------------------------------------------------------------------
# Shape-operator spectrum
# ---------------------------------------------------------------------------

@dataclass
class ShapeSpectrum:
    """Sorted shape-operator eigenvalues with unit ambient eigen-directions"""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    type_number: int
    classification: str
    normal: np.ndarray
    tangents: np.ndarray
    spectral_tol: float

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    @property
    def trace(self) -> float:
        return float(np.sum(self.eigenvalues))

    @property
    def is_minimal(self) -> bool:
        return abs(self.trace) < self.spectral_tol * self.n

    def _principal(self) -> Tuple[int, int]:
        i, j = np.argsort(np.abs(self.eigenvalues))[-2:]
        return (int(i), int(j)) if self.eigenvalues[i] >= self.eigenvalues[j] else (int(j), int(i))

    @property
    def nu1(self) -> float:
        return float(self.eigenvalues[self._principal()[0]])

    @property
    def nu2(self) -> float:
        return float(self.eigenvalues[self._principal()[1]])

    @property
    def X(self) -> np.ndarray:
        return self.eigenvectors[self._principal()[0]]

    @property
    def Y(self) -> np.ndarray:
        return self.eigenvectors[self._principal()[1]]

    def _kernel_indices(self) -> List[int]:
        return [k for k in range(self.n) if k not in self._principal()]

    @property
    def kernel(self) -> np.ndarray:
        """Directions e_1..e_{n-2} complementary to X and Y"""
        return self.eigenvectors[self._kernel_indices()]

    @property
    def kernel_eigenvalues(self) -> np.ndarray:
        return self.eigenvalues[self._kernel_indices()]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "type_number": self.type_number,
            "classification": self.classification,
        }


def _coordinates(m: HypersurfaceMap, at: Sequence) -> np.ndarray:
    x = np.hstack([np.ravel(np.asarray(a, dtype=float)) for a in at])
    if x.size != m.n:
        raise DimensionError(f"Point needs {m.n} coordinates (u, v, w^1..w^{m.n - 2}), got {x.size}")
    return x


def _evaluate(m: HypersurfaceMap, x: np.ndarray) -> np.ndarray:
    return m.point(x[0], x[1], x[2:])


def _tangents(m: HypersurfaceMap, x: np.ndarray, step: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Central-difference tangents plus the forward and backward samples"""
    n = m.n
    plus = np.array([_evaluate(m, x + step * _unit(k, n)) for k in range(n)])
    minus = np.array([_evaluate(m, x - step * _unit(k, n)) for k in range(n)])
    return (plus - minus) / (2.0 * step), plus, minus


def _unit_normal(m: HypersurfaceMap, x: np.ndarray, tangents: np.ndarray, rank_tol: float) -> np.ndarray:
    _, sv, vh = np.linalg.svd(tangents, full_matrices=True)
    if sv[-1] <= rank_tol * sv[0]:
        raise RegularityError(
            f"Jacobian is rank deficient at {x.tolist()} (singular values {sv.min():.3e}/{sv.max():.3e})",
            {"point": x.tolist(), "singular_values": sv.tolist()},
        )
    normal = vh[-1]
    if m.normal is not None:
        reference = m.normal(x[0], x[1])
        if np.dot(normal, reference) < 0:
            normal = -normal
    elif np.linalg.det(np.vstack([tangents, normal])) < 0:
        normal = -normal
    return normal


def _classify(eigenvalues: np.ndarray, tol: float) -> Tuple[int, str]:
    nonzero = eigenvalues[np.abs(eigenvalues) > tol]
    count = int(nonzero.size)
    if count == 0:
        return count, FLAT
    if count == 1:
        return count, TYPE_ONE
    if count == 2:
        return count, BI_UMBILICAL if abs(nonzero[0] - nonzero[1]) < tol else TYPE_TWO
    return count, OTHER


def shape_spectrum(surface_map: HypersurfaceMap, at: Sequence, fd_step: float = 1e-3,
                   spectral_tol: float = 1e-5, rank_tol: float = 1e-8) -> ShapeSpectrum:
    """
    Finite-difference shape-operator spectrum at a point

    Tangents from central differences, the unit normal by orthogonal
    completion, the second fundamental form from second and mixed
    differences, then the generalized symmetric eigenproblem h v = k g v.

    Args:
        surface_map: Hypersurface map
        at: (u, v, w^1, ..., w^{n-2}) or (u, v, w_array)
        fd_step: Finite-difference step
        spectral_tol: Eigenvalues with |k| <= spectral_tol count as zero
        rank_tol: Relative singular-value threshold of the Jacobian

    Returns:
        ShapeSpectrum

    Raises:
        RegularityError: If the Jacobian has rank < n
    """
    m = surface_map
    x = _coordinates(m, at)
    n, step = m.n, fd_step
    T, plus, minus = _tangents(m, x, step)
    normal = _unit_normal(m, x, T, rank_tol)
    center = _evaluate(m, x)

    H = np.zeros((n, n, m.dim))
    for k in range(n):
        H[k, k] = (plus[k] - 2.0 * center + minus[k]) / step ** 2
        for j in range(k + 1, n):
            ek, ej = step * _unit(k, n), step * _unit(j, n)
            H[k, j] = (
                _evaluate(m, x + ek + ej) - _evaluate(m, x + ek - ej)
                - _evaluate(m, x - ek + ej) + _evaluate(m, x - ek - ej)
            ) / (4.0 * step ** 2)
            H[j, k] = H[k, j]

    h = H @ normal
    g = T @ T.T
    eigenvalues, vectors = linalg.eigh(0.5 * (h + h.T), g)
    directions = (T.T @ vectors).T
    type_number, classification = _classify(eigenvalues, spectral_tol)
    return ShapeSpectrum(eigenvalues, directions, type_number, classification, normal, T, spectral_tol)


@dataclass
class SpectrumSample:
    u: float
    v: float
    w: np.ndarray
    spectrum: ShapeSpectrum

    @property
    def w_norm(self) -> float:
        return float(np.linalg.norm(self.w))


def sample_spectra(surface_map: HypersurfaceMap, count: int = 100, seed: int = 0,
                   w_scale: float = 0.2, inset: float = 0.1, fd_step: float = 1e-3,
                   spectral_tol: float = 1e-5, rank_tol: float = 1e-8) -> List[SpectrumSample]:
    """
    Spectra at `count` seeded random points of the domain

    (u, v) are drawn from the domain shrunk by `inset` of its width on every
    side, w uniformly from [-w_scale, w_scale]^{n-2}.
    """
    rng = np.random.default_rng(seed)
    d = surface_map.domain
    du, dv = inset * (d.u_max - d.u_min), inset * (d.v_max - d.v_min)
    samples = []
    for _ in range(count):
        u = float(rng.uniform(d.u_min + du, d.u_max - du))
        v = float(rng.uniform(d.v_min + dv, d.v_max - dv))
        w = rng.uniform(-w_scale, w_scale, size=surface_map.n - 2)
        spectrum = shape_spectrum(surface_map, (u, v, w), fd_step, spectral_tol, rank_tol)
        samples.append(SpectrumSample(u, v, w, spectrum))
    logger.info(f"Sampled {count} spectra of a {surface_map.kind} hypersurface (n={surface_map.n})")
    return samples


def normal_constancy(surface_map: HypersurfaceMap, u: float, v: float, ws: Sequence[Sequence[float]],
                     fd_step: float = 1e-3, rank_tol: float = 1e-8) -> float:
    """Largest distance between unit normals along the generator through (u, v)"""
    normals = []
    for w in ws:
        x = _coordinates(surface_map, (u, v, w))
        T, _, _ = _tangents(surface_map, x, fd_step)
        normals.append(_unit_normal(surface_map, x, T, rank_tol))
    reference = normals[0]
    deviations = [np.linalg.norm(nrm - np.sign(np.dot(nrm, reference) or 1.0) * reference) for nrm in normals]
    return float(max(deviations))


# ---------------------------------------------------------------------------
# Connection scalars
# ---------------------------------------------------------------------------

@dataclass
class ConnectionScalars:
    """gamma1, gamma2 and the per-direction lambda_i, mu_i, sigma_i at one point"""

    gamma1: float
    gamma2: float
    lambdas: List[float]
    mus: List[float]
    sigmas: List[float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "gamma1": self.gamma1,
            "gamma2": self.gamma2,
            "lambda": list(self.lambdas),
            "mu": list(self.mus),
            "sigma": list(self.sigmas),
        }


def _aligned_pair(spectrum: ShapeSpectrum, X0: np.ndarray, Y0: np.ndarray,
                  degenerate: bool) -> Tuple[np.ndarray, np.ndarray]:
    """Eigen-directions X, Y at a neighbour, made continuous with (X0, Y0)"""
    if degenerate:
        plane_basis = spectrum.eigenvectors[list(spectrum._principal())]
        X = plane_basis.T @ (plane_basis @ X0)
        X /= np.linalg.norm(X)
        Y = plane_basis.T @ (plane_basis @ Y0)
        Y -= np.dot(Y, X) * X
        return X, Y / np.linalg.norm(Y)
    X, Y = spectrum.X, spectrum.Y
    dx, dy = np.dot(X, X0), np.dot(Y, Y0)
    if abs(dx) < 0.5 or abs(dy) < 0.5:
        raise InstabilityError("Eigen-directions rotate too fast between neighbouring points")
    return np.sign(dx) * X, np.sign(dy) * Y


def connection_scalars(surface_map: HypersurfaceMap, at: Sequence, fd_step: float = 1e-3,
                       spectral_tol: float = 1e-5, rank_tol: float = 1e-8) -> ConnectionScalars:
    """
    Connection scalars of the frame (X, Y, e_i) at a point

        gamma1 = <D_X X, Y>,  gamma2 = -<D_Y Y, X>
        lambda_i = <D_X X, e_i>,  mu_i = <D_Y Y, e_i>,  sigma_i = <D_{e_i} X, Y>

    D is the ambient derivative. X and Y are followed to the 2n neighbouring
    points; D_V W is then sum_k c_k dW/dx_k with V = sum_k c_k dX/dx_k.

    Args:
        surface_map: Hypersurface map
        at: Point coordinates
        fd_step: Finite-difference step
        spectral_tol: Spectral tolerance
        rank_tol: Jacobian rank threshold

    Returns:
        ConnectionScalars

    Raises:
        InstabilityError: If the point is not type two (or bi-umbilical) or
            the classification changes in the neighbourhood
    """
    m = surface_map
    x = _coordinates(m, at)
    n, step = m.n, fd_step
    centre = shape_spectrum(m, x, fd_step, spectral_tol, rank_tol)
    if centre.classification not in (TYPE_TWO, BI_UMBILICAL):
        raise InstabilityError(
            f"Connection scalars need two nonzero eigenvalues; point is {centre.classification}",
            {"eigenvalues": centre.eigenvalues.tolist()},
        )
    degenerate = centre.classification == BI_UMBILICAL
    X0, Y0, kernel = centre.X, centre.Y, centre.kernel

    dX = np.zeros((n, m.dim))
    dY = np.zeros((n, m.dim))
    for k in range(n):
        fields = []
        for sign in (1.0, -1.0):
            neighbour = shape_spectrum(m, x + sign * step * _unit(k, n), fd_step, spectral_tol, rank_tol)
            if neighbour.classification != centre.classification:
                raise InstabilityError(
                    f"Eigenvalue crossing near {x.tolist()}: {centre.classification} -> {neighbour.classification}",
                    {"point": x.tolist(), "direction": k},
                )
            fields.append(_aligned_pair(neighbour, X0, Y0, degenerate))
        dX[k] = (fields[0][0] - fields[1][0]) / (2.0 * step)
        dY[k] = (fields[0][1] - fields[1][1]) / (2.0 * step)

    def derivative(direction: np.ndarray, d_field: np.ndarray) -> np.ndarray:
        coeffs, *_ = np.linalg.lstsq(centre.tangents.T, direction, rcond=None)
        return coeffs @ d_field

    DXX = derivative(X0, dX)
    DYY = derivative(Y0, dY)
    return ConnectionScalars(
        gamma1=float(np.dot(DXX, Y0)),
        gamma2=float(-np.dot(DYY, X0)),
        lambdas=[float(np.dot(DXX, e)) for e in kernel],
        mus=[float(np.dot(DYY, e)) for e in kernel],
        sigmas=[float(np.dot(derivative(e, dX), Y0)) for e in kernel],
    )


# ---------------------------------------------------------------------------
# Integral surface of the distribution and sphere fits
# ---------------------------------------------------------------------------

@dataclass
class SphereFit:
    center: np.ndarray
    radius: float
    rms: float
    dimension: int
    coordinates: np.ndarray


def _affine_hull(points: np.ndarray, tol: float = 1e-9) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    origin = points.mean(axis=0)
    _, sv, vh = np.linalg.svd(points - origin, full_matrices=False)
    k = int(np.sum(sv > tol * sv[0]))
    basis = vh[:k]
    return origin, basis, (points - origin) @ basis.T


def sphere_fit(points: np.ndarray) -> SphereFit:
    """
    Least-squares sphere in the affine hull of a point cloud

    Solves |y|^2 = 2 c.y + d in hull coordinates y, so the radius is
    sqrt(d + |c|^2).

    Args:
        points: Array of shape (m, d)

    Returns:
        SphereFit with ambient centre, radius, rms distance residual,
        hull dimension and hull coordinates relative to the centre
    """
    points = np.asarray(points, dtype=float).reshape(-1, np.shape(points)[-1])
    origin, basis, y = _affine_hull(points)
    A = np.hstack([2.0 * y, np.ones((y.shape[0], 1))])
    b = np.sum(y ** 2, axis=1)
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    c, d = sol[:-1], sol[-1]
    radius = float(np.sqrt(d + np.dot(c, c)))
    rms = float(np.sqrt(np.mean((np.linalg.norm(y - c, axis=1) - radius) ** 2)))
    return SphereFit(origin + c @ basis, radius, rms, basis.shape[0], y - c)


@dataclass
class IntegralSurfaceReport:
    """Forward checks on the w = 0 integral surface of a construction"""

    kind: str
    hull_dimension: int
    sphere_radius: Optional[float] = None
    expected_radius: Optional[float] = None
    fit_rms: Optional[float] = None
    mean_curvature_max: Optional[float] = None

    @property
    def radius_error(self) -> Optional[float]:
        if self.sphere_radius is None or self.expected_radius is None:
            return None
        return abs(self.sphere_radius - self.expected_radius) / self.expected_radius


def integral_surface_check(surface_map: HypersurfaceMap, grid: Optional[Grid2D] = None,
                           fd_step: float = 1e-3, spectral_tol: float = 1e-5) -> IntegralSurfaceReport:
    """
    Bi-umbilical maps: sphere fit of the w = 0 surface against 1/sqrt(c^2 + nu^2),
    with nu and c^2 = sum lambda_i^2 measured at the domain centre.
    Minimal maps: mean curvature of the w = 0 surface in its fitted R^3 or S^3.
    """
    grid = grid or surface_map.domain
    points = surface_map.base_surface(grid).values
    flat = points.reshape(-1, points.shape[-1])
    _, _, coords = _affine_hull(flat)
    dimension = coords.shape[1]
    report = IntegralSurfaceReport(surface_map.kind, dimension)

    if surface_map.kind == KIND_BIUMBILICAL:
        fit = sphere_fit(flat)
        uc, vc = grid.node(*grid.center_index())
        at = (uc, vc, np.zeros(surface_map.n - 2))
        spectrum = shape_spectrum(surface_map, at, fd_step, spectral_tol)
        scalars = connection_scalars(surface_map, at, fd_step, spectral_tol)
        c2 = float(np.sum(np.square(scalars.lambdas)))
        report.sphere_radius = fit.radius
        report.expected_radius = 1.0 / np.sqrt(c2 + spectrum.nu1 ** 2)
        report.fit_rms = fit.rms
    elif dimension == 3:
        report.mean_curvature_max = _mean_curvature_r3(coords.reshape(grid.shape + (3,)), grid).max_abs()
    elif dimension == 4:
        fit = sphere_fit(flat)
        unit = fit.coordinates / fit.radius
        unit /= np.linalg.norm(unit, axis=1, keepdims=True)
        s = SurfaceS3.from_array(grid, unit.reshape(grid.shape + (4,)))
        report.sphere_radius = fit.radius
        report.fit_rms = fit.rms
        report.mean_curvature_max = mean_curvature(fundamental_forms(s)).max_abs(margin=2)
    else:
        raise DimensionError(f"Integral surface spans an affine space of dimension {dimension}")
    return report


# ---------------------------------------------------------------------------
# Envelope charts (l, r)
# ---------------------------------------------------------------------------

def propagate_basis(spans: np.ndarray, seed_node: Tuple[int, int]) -> np.ndarray:
    """
    Orthonormal complements of span{rows of spans[i, j]} that vary continuously

    The basis at the seed node is the SVD null space; every other node projects
    its neighbour's basis onto the local complement and re-orthonormalizes,
    sweeping along the seed row and then along every column.

    Args:
        spans: Array (nu, nv, s, d) of spanning vectors
        seed_node: Node where the sweep starts

    Returns:
        Array (nu, nv, d - s, d)
    """
    nu, nv, s, d = spans.shape
    k = d - s
    i0, j0 = seed_node
    out = np.zeros((nu, nv, k, d))

    def complete(span: np.ndarray, seed: np.ndarray) -> np.ndarray:
        q, _ = np.linalg.qr(np.swapaxes(span, -1, -2))
        projected = seed - (seed @ q) @ np.swapaxes(q, -1, -2)
        q2, r2 = np.linalg.qr(np.swapaxes(projected, -1, -2))
        signs = np.sign(np.diagonal(r2, axis1=-2, axis2=-1))
        signs[signs == 0] = 1.0
        return np.swapaxes(q2 * signs[..., None, :], -1, -2)

    _, _, vh = np.linalg.svd(spans[i0, j0], full_matrices=True)
    out[i0, j0] = complete(spans[i0, j0], vh[s:])
    for direction in (1, -1):
        i = i0 + direction
        while 0 <= i < nu:
            out[i, j0] = complete(spans[i, j0], out[i - direction, j0])
            i += direction
    for direction in (1, -1):
        j = j0 + direction
        while 0 <= j < nv:
            out[:, j] = complete(spans[:, j], out[:, j - direction])
            j += direction
    return out


@dataclass(frozen=True, eq=False)
class HypersurfaceChart:
    """
    Envelope data of a type-number-two hypersurface: hyperplane normals l,
    oriented distances r, the Gram coefficients of l_u, l_v and a smooth
    orthonormal basis b_1..b_{n-2} of the complement of span{l, l_u, l_v}
    """

    n: int
    grid: Grid2D
    l: VectorField
    r: ScalarField
    l_u: VectorField
    l_v: VectorField
    E: ScalarField
    F: ScalarField
    G: ScalarField
    W2: ScalarField
    basis: np.ndarray
    w_samples: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def from_fields(cls, grid: Grid2D, l: np.ndarray, r: np.ndarray, n: Optional[int] = None,
                    unit_tol: float = 1e-8) -> "HypersurfaceChart":
        """
        Build a chart from sampled l and r

        Raises:
            DomainError: If |l| != 1 somewhere
            DegenerateEnvelopeError: If E, G or W^2 is not positive
        """
        lf = VectorField(grid, l)
        n = lf.dim - 1 if n is None else int(n)
        if lf.dim != n + 1:
            raise DimensionError(f"l has {lf.dim} components, expected {n + 1}")
        _require_n(n)
        defect = float(np.max(np.abs(np.linalg.norm(lf.values, axis=-1) - 1.0)))
        if defect > unit_tol:
            raise DomainError(f"l is not a unit field (defect {defect:.3e})", {"defect": defect})

        lu, lv = partial_u(lf), partial_v(lf)
        E, F, G = lu.dot(lu), lu.dot(lv), lv.dot(lv)
        W2 = E.values * G.values - F.values ** 2
        if (E.values <= 0).any() or (G.values <= 0).any() or (W2 <= ENVELOPE_TOL).any():
            raise DegenerateEnvelopeError("l, l_u, l_v are not linearly independent",
                                          {"min_W2": float(W2.min())})
        spans = np.stack([lf.values, lu.values, lv.values], axis=-2)
        basis = propagate_basis(spans, grid.center_index())
        return cls(n, grid, lf, ScalarField(grid, r), lu, lv, E, F, G, ScalarField(grid, W2), basis)

    def basis_defect(self) -> float:
        """Largest deviation of b_k from orthonormality and from orthogonality to l, l_u, l_v"""
        gram = self.basis @ np.swapaxes(self.basis, -1, -2)
        defect = np.max(np.abs(gram - np.eye(self.n - 2)))
        for vec in (self.l.values, self.l_u.values, self.l_v.values):
            defect = max(defect, np.max(np.abs(np.einsum("ijkd,ijd->ijk", self.basis, vec))))
        return float(defect)

    @cached_property
    def interpolants(self) -> Dict[str, FieldInterpolant]:
        """Bicubic interpolants of the chart fields, built once per chart"""
        fields: Dict[str, Any] = {
            "l": self.l, "r": self.r, "l_u": self.l_u, "l_v": self.l_v,
            "r_u": partial_u(self.r), "r_v": partial_v(self.r),
            "E": self.E, "F": self.F, "G": self.G, "W2": self.W2,
            "basis": VectorField(self.grid, self.basis.reshape(self.grid.shape + (-1,))),
        }
        return {name: FieldInterpolant(f) for name, f in fields.items()}

    def conformality_defect(self, margin: int = 1) -> float:
        E = self.E.values
        defect = np.maximum(np.abs(E - self.G.values), np.abs(self.F.values)) / E
        return float(np.max(defect[self.grid.interior_mask(margin)]))


def envelope_point(chart: HypersurfaceChart, u: float, v: float, w: Sequence[float]) -> np.ndarray:
    """
    Point of the envelope parameterization

        X = r l + ((G r_u - F r_v)/W^2) l_u + ((E r_v - F r_u)/W^2) l_v + sum w^k b_k

    Values between nodes are bicubic interpolants of the chart fields.

    Raises:
        DegenerateEnvelopeError: If W^2 vanishes at (u, v)
    """
    grid = chart.grid
    if not grid.contains(u, v):
        raise DomainError(f"({u}, {v}) lies outside the chart domain")
    w = np.asarray(w, dtype=float).reshape(chart.n - 2)
    splines = chart.interpolants

    def at(name):
        return splines[name](u, v)

    E, F, G, W2 = at("E"), at("F"), at("G"), at("W2")
    if W2 <= ENVELOPE_TOL:
        raise DegenerateEnvelopeError(f"W^2 = {W2:.3e} at ({u}, {v})")
    ru, rv = at("r_u"), at("r_v")
    basis = at("basis").reshape(chart.n - 2, chart.n + 1)
    return (
        at("r") * at("l")
        + ((G * ru - F * rv) / W2) * at("l_u")
        + ((E * rv - F * ru) / W2) * at("l_v")
        + w @ basis
    )


def extract_chart(surface_map: HypersurfaceMap, grid: Optional[Grid2D] = None) -> HypersurfaceChart:
    """
    Envelope data of a construction: l is the tangent-hyperplane normal and
    r = <z, l> its oriented distance from the origin

    l is fixed up to sign by r >= 0 at the grid centre; when r vanishes there
    the first nonzero component of l is made positive.
    """
    if surface_map.normal is None or surface_map.base is None:
        raise DomainError("Chart extraction needs a construction with an analytic tangent hyperplane")
    grid = grid or surface_map.domain
    U, V = grid.mesh()
    l = np.asarray(surface_map.normal(U, V), dtype=float)
    z = np.asarray(surface_map.base(U, V), dtype=float)
    r = np.sum(z * l, axis=-1)

    i0, j0 = grid.center_index()
    flip = False
    if abs(r[i0, j0]) > 1e-12:
        flip = r[i0, j0] < 0
    else:
        nonzero = np.flatnonzero(np.abs(l[i0, j0]) > 1e-12)
        flip = bool(nonzero.size) and l[i0, j0, nonzero[0]] < 0
    if flip:
        l, r = -l, -r
    return HypersurfaceChart.from_fields(grid, l, r, surface_map.n)


def _require_conformal(chart: HypersurfaceChart, tol: float) -> None:
    defect = chart.conformality_defect()
    if defect >= tol:
        raise DomainError(
            f"Chart is not conformal: max(|E - G|, |F|)/E = {defect:.3e}",
            {"conformality_defect": defect, "tolerance": tol},
        )


def biumbilical_system_residual(chart: HypersurfaceChart, conformality_tol: float = 1e-3) -> Dict[str, ScalarField]:
    """
    Residuals of the bi-umbilical system in a conformal chart

        l_uu - l_vv = (E_u/E) l_u - (E_v/E) l_v,   2 l_uv = (E_v/E) l_u + (E_u/E) l_v
        r_uu - r_vv = (E_u/E) r_u - (E_v/E) r_v,   2 r_uv = (E_v/E) r_u + (E_u/E) r_v

    Returns:
        Norm of each residual, boundary ring masked

    Raises:
        DomainError: If l_u^2 = l_v^2, l_u l_v = 0 fails
    """
    _require_conformal(chart, conformality_tol)
    grid = chart.grid
    mask = grid.interior_mask(1)
    E = chart.E.values
    a = partial_u(chart.E).values / E
    b = partial_v(chart.E).values / E
    lu, lv = chart.l_u.values, chart.l_v.values
    r = chart.r
    ru, rv = partial_u(r).values, partial_v(r).values

    l_diff = partial_uu(chart.l).values - partial_vv(chart.l).values - a[..., None] * lu + b[..., None] * lv
    l_mixed = 2.0 * partial_uv(chart.l).values - b[..., None] * lu - a[..., None] * lv
    r_diff = partial_uu(r).values - partial_vv(r).values - a * ru + b * rv
    r_mixed = 2.0 * partial_uv(r).values - b * ru - a * rv

    fields = {
        "l_difference": np.linalg.norm(l_diff, axis=-1),
        "l_mixed": np.linalg.norm(l_mixed, axis=-1),
        "r_difference": np.abs(r_diff),
        "r_mixed": np.abs(r_mixed),
    }
    return {k: ScalarField(grid, np.where(mask, v, 0.0), mask) for k, v in fields.items()}


def minimal_system_residual(chart: HypersurfaceChart, conformality_tol: float = 1e-3) -> Dict[str, ScalarField]:
    """Residuals of l_uu + l_vv + 2E l = 0 and r_uu + r_vv + 2E r = 0 in a conformal chart"""
    _require_conformal(chart, conformality_tol)
    grid = chart.grid
    mask = grid.interior_mask(1)
    E = chart.E.values
    l_res = partial_uu(chart.l).values + partial_vv(chart.l).values + 2.0 * E[..., None] * chart.l.values
    r_res = partial_uu(chart.r).values + partial_vv(chart.r).values + 2.0 * E * chart.r.values
    fields = {"l_equation": np.linalg.norm(l_res, axis=-1), "r_equation": np.abs(r_res)}
    return {k: ScalarField(grid, np.where(mask, v, 0.0), mask) for k, v in fields.items()}
