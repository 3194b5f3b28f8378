"""
Command-line interface module
Front door to the solver, reconstruction, family and hypersurface pipelines.
Every subcommand writes a verification report as JSON and CSV.

Exit status: 0 all gates pass, 1 a gate failed, 2 configuration or input
error, 3 any other pipeline error.
"""

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from .associated_family import build_family, default_angles, family_gate, verify_isometry
from .config import Config
from .frame_integrator import (
    InitialFrame,
    InvariantData,
    compatibility_report,
    path_disagreement,
    reconstruct_surface,
)
from .grid_core import Grid2D, ScalarField, VectorField, field_from_dict, field_from_expression, field_to_dict
from .hypersurface_builder import (
    BI_UMBILICAL,
    KIND_BIUMBILICAL,
    KIND_MINIMAL_R3,
    KIND_MINIMAL_S3,
    TYPE_TWO,
    HypersurfaceMap,
    biumbilical_system_residual,
    build_biumbilical_from_sphere,
    build_minimal_from_r3_surface,
    build_minimal_from_s3_surface,
    catenoid,
    clifford_chart,
    connection_scalars,
    extract_chart,
    helicoid,
    integral_surface_check,
    mercator_sphere,
    minimal_system_residual,
    normal_constancy,
    plane,
    sample_spectra,
)
from .reports import (
    VerificationReport,
    export_mesh,
    read_json_input,
    surface_from_dict,
    write_history_csv,
    write_rows_csv,
    write_spectrum_csv,
    write_surface_json,
)
from .sinh_poisson import NormalCurvatureField, certify_strong_regularity, residual_f_form, solve
from .surface_geometry import (
    SurfaceInvariants,
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
    small_sphere,
)
from .utils.error_utils import BonnetError, ConfigError, DomainError, SingularityError, handle_exception
from .utils.file_utils import ensure_output_dir, get_file_hash, validate_input_paths
from .utils.json_utils import dumps_deterministic, write_json

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

EXIT_PASS = 0
EXIT_GATE_FAILURE = 1
EXIT_CONFIG_ERROR = 2
EXIT_PIPELINE_ERROR = 3

DEFAULT_REPORT = "bonnet_report.json"
DEFAULT_SOLVE_GRID = "0,1,0,1,65,65"
DEFAULT_FIXTURE_GRID = "-1,1,-1,1,65,65"
# Analytic charts are checked for minimality on this many nodes per axis
CHECK_NODES = 201
# Relative error allowed between the fitted and the predicted sphere radius
SPHERE_RADIUS_GATE = 1e-2
# Samples used for the involutivity check of minimal constructions
INVOLUTIVITY_SAMPLES = 10

FIXTURES: Dict[str, Callable[[Grid2D], SurfaceS3]] = {
    "clifford": clifford_torus,
    "great-sphere": great_sphere,
    "small-sphere": small_sphere,
}

R3_CHARTS = {
    "catenoid": catenoid,
    "helicoid": helicoid,
    "plane": plane,
}

CONSTRUCTIONS = (KIND_BIUMBILICAL, KIND_MINIMAL_R3, KIND_MINIMAL_S3)


def setup_logging(config: Config, verbose: bool = False) -> None:
    """
    Configure root logging from the `logging` config section

    Args:
        config: Configuration
        verbose: Force DEBUG level
    """
    level_name = "DEBUG" if verbose else str(config.get("logging.level", "INFO")).upper()
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    log_file = config.get("logging.file")
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(level=getattr(logging, level_name, logging.INFO), format=LOG_FORMAT, handlers=handlers)


def setup_parser() -> argparse.ArgumentParser:
    """
    Set up the command-line argument parser

    Returns:
        Argument parser
    """
    parser = argparse.ArgumentParser(prog="bonnet", description="Minimal surfaces in S^3 toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", help="Subcommand")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="YAML configuration file")
    common.add_argument("--seed", type=int, help="Random seed for sampled checks")
    common.add_argument("--threads", type=int, help="Worker threads")
    common.add_argument("--gate", type=float, help="Absolute gate replacing every report gate")
    common.add_argument("--report", type=str, default=DEFAULT_REPORT,
                        help="Report path: JSON with the CSV table alongside, or a .csv path with the JSON alongside")
    common.add_argument("--verbose", action="store_true", help="Debug logging")

    solve_parser = subparsers.add_parser("solve-sinh-poisson", parents=[common],
                                         help="Solve the sinh-Poisson Dirichlet problem")
    solve_parser.add_argument("--grid", type=str, help=f"u_min,u_max,v_min,v_max,nu,nv (default {DEFAULT_SOLVE_GRID})")
    solve_parser.add_argument("--boundary", type=str, default="0",
                              help="Dirichlet data for f: an expression in u, v or a field JSON file")
    solve_parser.add_argument("--guess", type=str, help="Initial guess for f as an expression in u, v")
    solve_parser.add_argument("--tol", type=float, help="Newton tolerance (overrides solver.tol)")
    solve_parser.add_argument("--out", type=str, help="Output field JSON (nu)")
    solve_parser.add_argument("--history", type=str, help="Newton history CSV")

    rec_parser = subparsers.add_parser("reconstruct", parents=[common], help="Reconstruct a surface from nu")
    rec_parser.add_argument("--nu", "--input", dest="input", type=str, required=True, help="Field JSON of nu (or f)")
    rec_parser.add_argument("--frame0", type=str, default="identity",
                            help="Initial frame: identity, or a JSON file with a 4x4 matrix")
    rec_parser.add_argument("--out", type=str, help="Output surface JSON")
    rec_parser.add_argument("--allow-degenerate", action="store_true", help="Accept nu that is not strongly regular")

    verify_parser = subparsers.add_parser("verify-surface", parents=[common],
                                          help="Check Gauss and Codazzi equations of a surface")
    source = verify_parser.add_mutually_exclusive_group()
    source.add_argument("--in", "--input", dest="input", type=str, help="Surface JSON")
    source.add_argument("--fixture", type=str, choices=sorted(FIXTURES), default="clifford", help="Analytic fixture")
    verify_parser.add_argument("--grid", type=str, default=DEFAULT_FIXTURE_GRID, help="Fixture grid")
    verify_parser.add_argument("--out", type=str, help="Write the checked surface as JSON")
    verify_parser.add_argument("--canonical", action="store_true",
                               help="Also resample a minimal surface onto canonical parameters and check E = G = 1/nu")

    family_parser = subparsers.add_parser("associated-family", parents=[common],
                                          help="Build and compare the associated family")
    family_parser.add_argument("--nu", "--input", dest="input", type=str, required=True, help="Field JSON of nu (or f)")
    family_parser.add_argument("--angles", type=int, help="Number of equally spaced angles")
    family_parser.add_argument("--frame0", type=str, default="identity",
                               help="Initial frame: identity, or a JSON file with a 4x4 matrix")
    family_parser.add_argument("--out", "--out-dir", dest="out_dir", type=str,
                               help="Directory for member surfaces and the isometry table")
    family_parser.add_argument("--allow-degenerate", action="store_true", help="Accept nu that is not strongly regular")

    build_parser = subparsers.add_parser("build-hypersurface", parents=[common],
                                         help="Build a type-number-two hypersurface")
    build_parser.add_argument("--kind", "--construction", dest="construction", type=str, choices=CONSTRUCTIONS,
                              required=True)
    build_parser.add_argument("--n", type=int, default=3, help="Hypersurface dimension")
    build_parser.add_argument("--radius", type=float, default=1.0, help="Sphere radius")
    build_parser.add_argument("--alpha", type=float, default=0.0, help="Rotation angle (biumbilical)")
    build_parser.add_argument("--surface", type=str, choices=sorted(R3_CHARTS), default="catenoid",
                              help="Minimal surface of R^3 (minimal-r3)")
    build_parser.add_argument("--input", type=str, help="Surface JSON in S^3 (minimal-s3; Clifford torus otherwise)")
    build_parser.add_argument("--grid", type=str, help="Chart domain")
    build_parser.add_argument("--out", type=str, help="Hypersurface description JSON")

    classify_parser = subparsers.add_parser("classify", parents=[common],
                                            help="Sample and classify shape-operator spectra")
    classify_parser.add_argument("--in", "--input", dest="input", type=str, required=True,
                                 help="Hypersurface description JSON")
    classify_parser.add_argument("--samples", "--count", dest="count", type=int, default=100,
                                 help="Number of sample points")
    classify_parser.add_argument("--csv", type=str,
                                 help="Spectrum table CSV (defaults to the report path when that ends in .csv)")

    export_parser = subparsers.add_parser("export", parents=[common], help="Export a mesh as OBJ")
    export_parser.add_argument("--input", type=str, required=True,
                               help="Surface JSON, or hypersurface description JSON with --w")
    export_parser.add_argument("--out", type=str, required=True, help="Output OBJ path")
    export_parser.add_argument("--projection", type=str, choices=("stereographic", "drop-coordinate"))
    export_parser.add_argument("--pole", type=str, help="Projection pole as four comma-separated values")
    export_parser.add_argument("--w", type=str, help="Generator coordinates of a hypersurface slice")
    export_parser.add_argument("--grid", type=str, help="Slice grid")

    return parser


@dataclass
class RunConfig:
    """Validated settings of one CLI run"""

    command: str
    config: Config
    grid: Optional[Grid2D] = None
    input_path: Optional[str] = None
    output_path: Optional[str] = None
    report_path: str = DEFAULT_REPORT
    gate: Optional[float] = None
    angles: Optional[int] = None
    projection: Optional[str] = None
    options: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_args(cls, args: argparse.Namespace, config: Config) -> "RunConfig":
        """
        Build a RunConfig from parsed arguments

        Raises:
            ConfigError: On a negative gate, a bad count or a missing input file
        """
        if args.seed is not None:
            config.set("runtime.seed", int(args.seed))
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError(f"--threads must be >= 1, got {args.threads}")
            config.set("runtime.threads", int(args.threads))
        if args.gate is not None and not args.gate >= 0:
            raise ConfigError(f"--gate must be >= 0, got {args.gate}")

        grid_spec = getattr(args, "grid", None)
        angles = getattr(args, "angles", None)
        if angles is not None and angles < 1:
            raise ConfigError(f"--angles must be >= 1, got {angles}")
        count = getattr(args, "count", None)
        if count is not None and count < 1:
            raise ConfigError(f"--samples must be >= 1, got {count}")
        tol = getattr(args, "tol", None)
        if tol is not None:
            if not tol > 0:
                raise ConfigError(f"--tol must be > 0, got {tol}")
            config.set("solver.tol", float(tol))

        skip = {"command", "config", "seed", "threads", "gate", "report", "grid", "input", "out",
                "angles", "projection", "verbose", "tol"}
        options = {k: v for k, v in vars(args).items() if k not in skip}

        run_config = cls(
            command=args.command,
            config=config,
            grid=Grid2D.parse(grid_spec) if grid_spec else None,
            input_path=getattr(args, "input", None),
            output_path=getattr(args, "out", None),
            report_path=args.report,
            gate=args.gate,
            angles=angles,
            projection=getattr(args, "projection", None),
            options=options,
        )
        frame0 = options.get("frame0")
        validate_input_paths([run_config.input_path, None if frame0 == "identity" else frame0])
        return run_config

    @property
    def tolerances(self) -> Dict[str, float]:
        return self.config.tolerances()

    def gate_or(self, default: Optional[float]) -> Optional[float]:
        """The --gate override when given, else `default`"""
        return self.gate if self.gate is not None else default

    @property
    def report_json_path(self) -> str:
        """A .csv report path puts the JSON alongside it"""
        path = Path(self.report_path)
        return str(path.with_suffix(".json")) if path.suffix.lower() == ".csv" else self.report_path

    @property
    def report_csv_path(self) -> str:
        return str(Path(self.report_path).with_suffix(".csv"))

    @property
    def spectrum_path(self) -> Optional[str]:
        """Spectrum table of classify: --csv, else a .csv report path"""
        if self.options.get("csv"):
            return self.options["csv"]
        if Path(self.report_path).suffix.lower() == ".csv":
            return self.report_path
        return None

    def input_files(self) -> List[str]:
        """Every file read by the run, for provenance"""
        paths = [self.input_path, self.options.get("frame0"), self.options.get("boundary")]
        return [p for p in paths if p and Path(p).is_file()]

    def provenance(self) -> Dict[str, Any]:
        inputs = {path: get_file_hash(path) for path in self.input_files()}
        return {
            "version": __version__,
            "command": self.command,
            "inputs": inputs,
            "grid": None if self.grid is None else self.grid.to_dict(),
            "tolerances": self.tolerances,
            "seed": int(self.config.get("runtime.seed", 0)),
            "gate_override": self.gate,
        }


# ---------------------------------------------------------------------------
# Input helpers
# ---------------------------------------------------------------------------

def _load_nu(path: str) -> NormalCurvatureField:
    data = read_json_input(path)
    loaded = field_from_dict(data)
    if not isinstance(loaded, ScalarField):
        raise ConfigError(f"{path} holds a vector field; a scalar nu or f field is required")
    if data.get("quantity") == "f":
        return NormalCurvatureField.from_f(loaded)
    return NormalCurvatureField(loaded)


def _load_boundary(rc: RunConfig) -> ScalarField:
    """--boundary as a field JSON file (f, or nu when marked so) or an expression for f on --grid"""
    spec = rc.options.get("boundary") or "0"
    if not Path(spec).is_file():
        return field_from_expression(rc.grid or Grid2D.parse(DEFAULT_SOLVE_GRID), spec)
    data = read_json_input(spec)
    loaded = field_from_dict(data)
    if not isinstance(loaded, ScalarField):
        raise ConfigError(f"{spec} holds a vector field; scalar boundary data is required", {"path": spec})
    if rc.grid is not None and rc.grid != loaded.grid:
        raise ConfigError(f"--grid disagrees with the grid stored in {spec}", {"path": spec})
    if data.get("quantity") == "nu":
        return NormalCurvatureField(loaded).f
    return loaded


def _load_frame0(spec: Optional[str]) -> Tuple[Optional[np.ndarray], Optional[Tuple[int, int]]]:
    """
    --frame0: `identity`, or a JSON file holding a 4x4 matrix of rows (X, Y, N, l)
    or {"frame": [[...]], "node": [i, j]}

    Raises:
        ConfigError: If the matrix is malformed or not a rotation
    """
    if not spec or spec == "identity":
        return None, None
    data = read_json_input(spec)
    matrix, node = (data.get("frame"), data.get("node")) if isinstance(data, dict) else (data, None)
    try:
        frame = np.asarray(matrix, dtype=float)
        node = None if node is None else (int(node[0]), int(node[1]))
        InitialFrame(frame, node or (0, 0))
    except (TypeError, ValueError, IndexError) as e:
        raise ConfigError(f"Malformed initial frame in {spec}: {str(e)}", {"path": spec})
    except DomainError as e:
        raise ConfigError(f"Initial frame in {spec} is not admissible: {e.message}", {"path": spec})
    return frame, node


def _parse_floats(text: str, name: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise ConfigError(f"Malformed {name}: {text} ({str(e)})")


def _check_grid(domain: Grid2D) -> Grid2D:
    return Grid2D(domain.u_min, domain.u_max, domain.v_min, domain.v_max,
                  max(domain.nu, CHECK_NODES), max(domain.nv, CHECK_NODES))


def describe_hypersurface(rc: RunConfig) -> Dict[str, Any]:
    """Self-contained description from which `build_map` rebuilds the hypersurface"""
    opts = rc.options
    description: Dict[str, Any] = {
        "construction": opts["construction"],
        "n": int(opts["n"]),
        "domain": None if rc.grid is None else rc.grid.to_dict(),
    }
    if opts["construction"] == KIND_BIUMBILICAL:
        description.update(radius=float(opts["radius"]), alpha=float(opts["alpha"]))
    elif opts["construction"] == KIND_MINIMAL_R3:
        description["surface"] = opts["surface"]
    else:
        description["radius"] = float(opts["radius"])
        if rc.input_path:
            description["surface_data"] = read_json_input(rc.input_path)
        else:
            description["surface"] = "clifford"
    return description


def build_map(description: Dict[str, Any]) -> HypersurfaceMap:
    """
    Rebuild a hypersurface from its description

    Raises:
        ConfigError: If the description is incomplete
    """
    try:
        construction = description["construction"]
        n = int(description["n"])
        domain = description.get("domain")
        grid = None if domain is None else Grid2D.from_dict(domain)
        if construction == KIND_BIUMBILICAL:
            chart = mercator_sphere(grid) if grid else mercator_sphere()
            return build_biumbilical_from_sphere(float(description["radius"]), float(description["alpha"]), n, chart)
        if construction == KIND_MINIMAL_R3:
            factory = R3_CHARTS[description["surface"]]
            return build_minimal_from_r3_surface(factory(grid) if grid else factory(), n)
        if construction == KIND_MINIMAL_S3:
            radius = float(description.get("radius", 1.0))
            if "surface_data" in description:
                return build_minimal_from_s3_surface(surface_from_dict(description["surface_data"]), n, radius)
            chart = clifford_chart(grid) if grid else clifford_chart()
            return build_minimal_from_s3_surface(chart, n, radius)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"Malformed hypersurface description: {str(e)}")
    raise ConfigError(f"Unknown construction: {construction}")


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------

def handle_solve(rc: RunConfig, report: VerificationReport) -> None:
    """Handle solve-sinh-poisson"""
    tol = rc.tolerances
    boundary = _load_boundary(rc)
    grid = boundary.grid
    report.provenance["grid"] = grid.to_dict()
    guess_expr = rc.options.get("guess")
    guess = field_from_expression(grid, guess_expr) if guess_expr else None

    result = solve(
        boundary,
        guess,
        tol=float(rc.config.get("solver.tol")),
        max_iters=int(rc.config.get("solver.max_iters")),
        armijo=float(rc.config.get("solver.armijo")),
        min_step=float(rc.config.get("solver.min_step")),
    )
    res = residual_f_form(result.f)
    report.add("sinh_poisson_residual", res.max_abs(), res.mean_abs(), gate=rc.gate_or(tol["residual_gate"]))
    report.results.update(
        iterations=result.iterations,
        convergence_constant=result.convergence_constant,
        strong_regularity_margin=certify_strong_regularity(result.nu),
    )

    if rc.output_path:
        ensure_output_dir(rc.output_path)
        write_json(rc.output_path, field_to_dict(result.nu.nu, quantity="nu"))
    history_path = rc.options.get("history")
    if history_path:
        ensure_output_dir(history_path)
        write_history_csv(history_path, result.history)


def handle_reconstruct(rc: RunConfig, report: VerificationReport) -> None:
    """Handle reconstruct"""
    nu = _load_nu(rc.input_path)
    tol = rc.tolerances
    grid = nu.grid
    h2 = grid.h ** 2
    drift = tol["orthonormality_drift"]
    frame0, node = _load_frame0(rc.options.get("frame0"))
    initial = InitialFrame.identity(grid)
    if frame0 is not None:
        node = node or grid.center_index()
        if not (0 <= node[0] < grid.nu and 0 <= node[1] < grid.nv):
            raise ConfigError(f"Initial frame node {list(node)} lies outside the {grid.nu}x{grid.nv} grid")
        initial = InitialFrame(frame0, node)

    rebuilt = reconstruct_surface(nu, initial, gate=tol["residual_gate"], drift_tol=drift,
                                  allow_degenerate=bool(rc.options.get("allow_degenerate")))
    frame = rebuilt.frame
    report.add("sinh_poisson_residual", rebuilt.residual_max, gate=rc.gate_or(tol["residual_gate"]))

    compat = compatibility_report(rebuilt.matrices, InvariantData.canonical(nu))
    report.add("compatibility", compat.max_residual, compat.mean_residual,
               gate=rc.gate_or(tol["compatibility_factor"] * h2))
    report.add("gram_defect", frame.gram_defect(), gate=rc.gate_or(tol["unit_sphere"]))
    report.add("unit_sphere", frame.unit_sphere_defect(), gate=rc.gate_or(tol["unit_sphere"]))
    report.add("path_disagreement", path_disagreement(rebuilt.matrices, initial, drift))

    forms = fundamental_forms(rebuilt.surface, check_normal=False)
    su, sv = grid.window_slices(rebuilt.window)
    window_mask = np.zeros(grid.shape, dtype=bool)
    window_mask[su, sv] = True
    mask = window_mask & grid.interior_mask(1)
    error = np.abs(forms.e.values / forms.E.values - nu.nu.values)[mask]
    report.add("principal_net", forms.principal_net_defect(), gate=rc.gate_or(tol["gate_factor"] * h2))
    report.add("invariant_nu1", float(error.max()), float(error.mean()), gate=rc.gate_or(tol["gate_factor"] * h2))
    report.results.update(
        window=rebuilt.window.to_dict(),
        strongly_regular=rebuilt.strongly_regular,
        conditions=compat.conditions,
    )

    if rc.output_path:
        ensure_output_dir(rc.output_path)
        write_surface_json(rc.output_path, rebuilt.surface, frame)


def handle_verify_surface(rc: RunConfig, report: VerificationReport) -> None:
    """Handle verify-surface"""
    tol = rc.tolerances
    if rc.input_path:
        surface = surface_from_dict(read_json_input(rc.input_path), tol["unit_sphere"])
        report.results["source"] = "input"
    else:
        fixture = rc.options.get("fixture") or "clifford"
        surface = FIXTURES[fixture](rc.grid)
        report.results["source"] = fixture
    grid = surface.grid
    gate = tol["gate_factor"] * grid.h ** 2

    unit = float(np.max(np.abs(np.linalg.norm(surface.l.values, axis=-1) - 1.0)))
    report.add("unit_sphere", unit, gate=rc.gate_or(tol["unit_sphere"]))
    forms = fundamental_forms(surface, check_normal=surface.N is not None, normal_tol=tol["normal"])
    defect = forms.principal_net_defect()
    report.add("principal_net", defect, gate=rc.gate_or(tol["principal_net"]))
    if defect >= tol["principal_net"]:
        logger.warning("Parametric net is not principal; skipping invariant checks")
        return

    surface, inv, swapped = order_principal(surface, principal_tol=tol["principal_net"],
                                            check_normal=surface.N is not None, normal_tol=tol["normal"])
    report.results["swapped_xy"] = swapped
    gauss = gauss_residual(inv)
    report.add("gauss_equation", gauss.max_abs(), gauss.mean_abs(), gate=rc.gate_or(gate))
    try:
        first, second = codazzi_residual(inv)
        report.add("codazzi_1", first.max_abs(), first.mean_abs(), gate=rc.gate_or(gate))
        report.add("codazzi_2", second.max_abs(), second.mean_abs(), gate=rc.gate_or(gate))
    except SingularityError as e:
        logger.warning(f"Codazzi check skipped: {e.message}")
        report.results["codazzi"] = "skipped: umbilic node"

    intrinsic = intrinsic_gauss_curvature(inv)
    mask = intrinsic.valid
    extrinsic = 1.0 + inv.nu1.values * inv.nu2.values
    gap = np.abs(intrinsic.values - extrinsic)[mask]
    report.add("gauss_curvature", float(gap.max()), float(gap.mean()), gate=rc.gate_or(gate))
    report.results.update(
        nu1_mean=float(np.mean(inv.nu1.values[mask])),
        nu2_mean=float(np.mean(inv.nu2.values[mask])),
        mean_curvature_max=float(np.max(np.abs(inv.mean_curvature.values[mask]))),
    )
    if rc.options.get("canonical"):
        _check_canonical(rc, report, surface, inv, gate)

    if rc.output_path:
        ensure_output_dir(rc.output_path)
        write_surface_json(rc.output_path, surface)


def _check_canonical(rc: RunConfig, report: VerificationReport, surface: SurfaceS3,
                     inv: SurfaceInvariants, gate: float) -> None:
    """Canonical parameters: nu E and nu G equal 1 to discretization accuracy"""
    tol = rc.tolerances
    canonical = canonical_reparameterize(surface, inv, minimality_tol=gate,
                                         separability_tol=tol["separability"])
    c_inv = invariants(canonical, principal_tol=gate, check_normal=False)
    mask = canonical.grid.interior_mask(1)
    nu = 0.5 * (c_inv.nu1.values - c_inv.nu2.values)
    defect = np.maximum(np.abs(nu * c_inv.E.values - 1.0), np.abs(nu * c_inv.G.values - 1.0))[mask]
    report.add("canonical_metric", float(defect.max()), float(defect.mean()), gate=rc.gate_or(gate))
    report.results["canonical_grid"] = canonical.grid.to_dict()


def handle_associated_family(rc: RunConfig, report: VerificationReport) -> None:
    """Handle associated-family"""
    nu = _load_nu(rc.input_path)
    tol = rc.tolerances
    count = rc.angles or int(rc.config.get("family.angles"))
    ts = default_angles(count)
    frame0, node = _load_frame0(rc.options.get("frame0"))
    if node is not None:
        logger.warning("associated-family places the initial frame at the centre of every member; node ignored")

    family = build_family(
        nu,
        ts,
        frame0=frame0,
        disc_radius=rc.config.get("family.disc_radius"),
        residual_gate=tol["residual_gate"],
        gate_factor=tol["gate_factor"],
        threads=int(rc.config.get("runtime.threads")),
        allow_degenerate=bool(rc.options.get("allow_degenerate")),
    )
    report.failures.extend(family.failures)
    if not family.members or not np.isclose(family.members[0].t, 0.0):
        raise DomainError("Base member t = 0 could not be built", {"failures": len(family.failures)})
    base = family.members[0]
    su, sv = nu.grid.window_slices(base.nu_t.grid)
    restriction = float(np.max(np.abs(base.nu_t.nu.values - nu.nu.values[su, sv])))
    report.add("base_restriction", restriction, gate=rc.gate_or(tol["interpolation"]))

    rows = []
    for member in family.members:
        label = f"t={member.t:.6f}"
        member_gate = family_gate(member.surface.grid, tol["residual_gate"], tol["gate_factor"])
        report.add(f"member_residual[{label}]", member.residual_max, gate=rc.gate_or(member_gate))
        iso = verify_isometry(base, member, gate=rc.gate, gate_factor=tol["gate_factor"])
        report.add(f"isometry[{label}]", max(iso.e_deviation, iso.g_deviation, iso.f_max), gate=iso.gate)
        report.add(f"metric[{label}]", iso.metric_deviation, gate=iso.gate)
        rows.append([member.t, iso.e_deviation, iso.g_deviation, iso.f_max, iso.metric_deviation,
                     iso.gate, iso.passed])
    report.results["angles"] = [float(t) for t in ts]
    report.results["members"] = len(family.members)

    out_dir = rc.options.get("out_dir")
    if out_dir:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        for k, member in enumerate(family.members):
            write_surface_json(str(Path(out_dir) / f"member_{k:02d}.json"), member.surface)
        write_rows_csv(str(Path(out_dir) / "isometry_report.csv"),
                       ["t", "e_deviation", "g_deviation", "f_max", "metric_deviation", "gate", "passed"], rows)


def handle_build_hypersurface(rc: RunConfig, report: VerificationReport) -> None:
    """Handle build-hypersurface"""
    tol = rc.tolerances
    description = describe_hypersurface(rc)
    surface_map = build_map(description)
    fd_step = float(rc.config.get("spectrum.fd_step"))

    integral = integral_surface_check(surface_map, _check_grid(surface_map.domain), fd_step, tol["spectral"])
    report.results["hull_dimension"] = integral.hull_dimension
    if surface_map.kind == KIND_BIUMBILICAL:
        report.add("sphere_radius", integral.radius_error, gate=rc.gate_or(SPHERE_RADIUS_GATE))
        report.add("sphere_fit_rms", integral.fit_rms)
        report.results.update(sphere_radius=integral.sphere_radius, expected_radius=integral.expected_radius)
    else:
        report.add("integral_mean_curvature", integral.mean_curvature_max, gate=rc.gate_or(tol["minimality"]))

    chart = extract_chart(surface_map)
    system = (biumbilical_system_residual if surface_map.kind == KIND_BIUMBILICAL else minimal_system_residual)
    gate = tol["gate_factor"] * chart.grid.h ** 2
    for name, res in sorted(system(chart, tol["conformality"]).items()):
        report.add(f"system_{name}", res.max_abs(), res.mean_abs(), gate=rc.gate_or(gate))
    report.results["description"] = {k: v for k, v in description.items() if k != "surface_data"}

    if rc.output_path:
        ensure_output_dir(rc.output_path)
        write_json(rc.output_path, description)


def handle_classify(rc: RunConfig, report: VerificationReport) -> None:
    """Handle classify"""
    tol = rc.tolerances
    surface_map = build_map(read_json_input(rc.input_path))
    fd_step = float(rc.config.get("spectrum.fd_step"))
    rank_tol = float(rc.config.get("spectrum.rank_tol"))
    spectral = tol["spectral"]
    samples = sample_spectra(surface_map, count=int(rc.options.get("count") or 100),
                             seed=int(rc.config.get("runtime.seed")),
                             fd_step=fd_step, spectral_tol=spectral, rank_tol=rank_tol)

    expected = BI_UMBILICAL if surface_map.kind == KIND_BIUMBILICAL else TYPE_TWO
    mismatched = sum(s.spectrum.classification != expected for s in samples)
    report.add("classification_mismatches", float(mismatched), gate=rc.gate_or(1.0))
    kernel = max(float(np.max(np.abs(s.spectrum.kernel_eigenvalues))) for s in samples)
    report.add("kernel_eigenvalues", kernel, gate=rc.gate_or(spectral))

    if surface_map.kind == KIND_BIUMBILICAL:
        gap = max(abs(s.spectrum.nu1 - s.spectrum.nu2) for s in samples)
        report.add("eigenvalue_gap", gap, gate=rc.gate_or(spectral))
        report.results["nu_min"] = min(abs(s.spectrum.nu1) for s in samples)
    else:
        trace = max(abs(s.spectrum.trace) for s in samples)
        report.add("trace", trace, gate=rc.gate_or(spectral))
        sigmas = []
        for s in samples[:INVOLUTIVITY_SAMPLES]:
            scalars = connection_scalars(surface_map, (s.u, s.v, s.w), fd_step, spectral, rank_tol)
            sigmas.extend(abs(x) for x in scalars.sigmas)
        report.add("involutivity", max(sigmas, default=0.0), gate=rc.gate_or(spectral))

    first = samples[0]
    ws = [np.zeros(surface_map.n - 2)] + [s.w for s in samples[:5]]
    report.add("normal_constancy", normal_constancy(surface_map, first.u, first.v, ws, fd_step, rank_tol))
    report.results.update(
        samples=len(samples),
        classifications=sorted({s.spectrum.classification for s in samples}),
        kind=surface_map.kind,
    )

    csv_path = rc.spectrum_path
    if csv_path:
        ensure_output_dir(csv_path)
        write_spectrum_csv(csv_path, samples)


def handle_export(rc: RunConfig, report: VerificationReport) -> None:
    """Handle export"""
    projection = rc.projection or rc.config.get("export.projection")
    pole_text = rc.options.get("pole")
    pole = _parse_floats(pole_text, "pole") if pole_text else rc.config.get("export.pole")
    if len(pole) != 4:
        raise ConfigError("Projection pole needs four components")
    precision = int(rc.config.get("export.precision"))

    data = read_json_input(rc.input_path)
    w_text = rc.options.get("w")
    if w_text is not None:
        surface_map = build_map(data)
        w = np.asarray(_parse_floats(w_text, "w"), dtype=float)
        if w.size != surface_map.n - 2:
            raise ConfigError(f"--w needs {surface_map.n - 2} values, got {w.size}")
        grid = rc.grid or surface_map.domain
        points = np.array([[surface_map.point(u, v, w) for v in grid.v] for u in grid.u])
        target = VectorField(grid, points)
    else:
        target = surface_from_dict(data, rc.tolerances["unit_sphere"])
        grid = target.grid

    ensure_output_dir(rc.output_path)
    export_mesh(target, rc.output_path, projection=projection, pole=pole, precision=precision)
    report.results.update(
        path=rc.output_path,
        projection=projection,
        vertices=grid.nu * grid.nv,
        faces=(grid.nu - 1) * (grid.nv - 1),
        mesh_sha256=get_file_hash(rc.output_path),
    )


def run(run_config: RunConfig) -> int:
    """
    Dispatch one subcommand and write its report

    Args:
        run_config: Validated run settings

    Returns:
        Exit status
    """
    command_handlers = {
        "solve-sinh-poisson": handle_solve,
        "reconstruct": handle_reconstruct,
        "verify-surface": handle_verify_surface,
        "associated-family": handle_associated_family,
        "build-hypersurface": handle_build_hypersurface,
        "classify": handle_classify,
        "export": handle_export,
    }
    handler = command_handlers.get(run_config.command)
    if handler is None:
        return _fail(ConfigError(f"Unknown command: {run_config.command}"), EXIT_CONFIG_ERROR)

    report = VerificationReport(run_config.command, provenance=run_config.provenance())
    try:
        handler(run_config, report)
    except ConfigError as e:
        return _fail(e, EXIT_CONFIG_ERROR)
    except BonnetError as e:
        return _fail(e, EXIT_PIPELINE_ERROR)
    except Exception as e:
        logger.error(f"Command failed: {str(e)}")
        return _fail(e, EXIT_PIPELINE_ERROR)

    ensure_output_dir(run_config.report_path)
    report.write_json(run_config.report_json_path)
    if not (run_config.command == "classify" and run_config.spectrum_path == run_config.report_csv_path):
        report.write_csv(run_config.report_csv_path)
    if report.passed:
        logger.info(f"{run_config.command}: all gates passed")
        return EXIT_PASS
    logger.warning(f"{run_config.command}: gate failure")
    return EXIT_GATE_FAILURE


def _fail(exc: Exception, status: int) -> int:
    record = handle_exception(exc, "cli")
    sys.stderr.write(dumps_deterministic(record))
    return status


def main(argv: Optional[List[str]] = None) -> int:
    """
    Main entry point; parses arguments and runs the selected subcommand

    Args:
        argv: Argument list (defaults to sys.argv[1:])

    Returns:
        Exit status
    """
    parser = setup_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return EXIT_CONFIG_ERROR

    try:
        config = Config(args.config)
        setup_logging(config, args.verbose)
        run_config = RunConfig.from_args(args, config)
    except ConfigError as e:
        return _fail(e, EXIT_CONFIG_ERROR)

    return run(run_config)


if __name__ == "__main__":
    sys.exit(main())
