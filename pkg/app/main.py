"""
Anisotropic Exponent Toolkit - Command Line
===========================================
Batch front door over the library modules.

Commands:
- exponents - Derived exponents, Theta, q0 and I0 for a vector p
- transform - Scale family, tau_theta / sigma_theta and rescalings
- moser     - Exhaustive stopping sets of the exponent bootstrap
- solve     - Discrete extremal of the anisotropic Sobolev inequality
- fit       - Tail slope and envelope constant of a saved field
- support   - Support extents and tail radius of a saved field

Every command writes a JSON document {"schema_version", "command",
"config", "result"} to the output directory and to stdout. Indices are
1-based on the command line and in every artifact.

Exit codes: 0 success, 1 invalid input, 2 numerical failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import yaml
from pydantic import ValidationError

from app.config import SCHEMA_VERSION, SLOPE_TOLERANCE_SOLVER, setup_logging
from app.decay import (
    detect_support, fit_envelope_constant, fit_tail_slope, predicted_slope,
    ray_samples, tail_radius,
)
from app.errors import AnisoError, InvalidInputError
from app.exponents import analyze, parse_exponent_vector, phi_polynomial, serrin_identity_holds
from app.grid import (
    export_axis_slice_csv, load_field, product_quotient, save_field, sobolev_quotient,
)
from app.models import (
    Command, DerivedExponents, DiagonalMap, ErrorResponse, ExponentVector,
    IterationTrace, RunConfig, SolverConfig, ThetaVector, to_fraction,
)
from app.moser import enumerate_phi
from app.serialization import one_based, render_json, write_csv, write_json
from app.solver import minimize, report_euler_lagrange
from app.transforms import (
    euler_lagrange_rescale, normalization_map, scale_exponents, scale_family,
    sigma_theta, tau_theta,
)

logger = logging.getLogger(__name__)


# ============================================================================
# ARGUMENT PARSING
# ============================================================================

class CliParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting, so run() owns exit codes"""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise InvalidInputError(message)


def _items(text: str) -> List[str]:
    items = [item.strip() for item in text.split(",")]
    if not items or any(not item for item in items):
        raise InvalidInputError(f"malformed list {text!r}")
    return items


def _indices(text: Optional[str]) -> Optional[List[int]]:
    """1-based index list -> 0-based"""
    if text is None:
        return None
    if not text.strip():
        return []
    try:
        values = [int(item) for item in _items(text)]
    except ValueError:
        raise InvalidInputError(f"malformed index list {text!r}")
    if any(v < 1 for v in values):
        raise InvalidInputError("indices are 1-based")
    return [v - 1 for v in values]


def _floats(text: str) -> List[float]:
    try:
        return [float(item) for item in _items(text)]
    except ValueError:
        raise InvalidInputError(f"malformed number list {text!r}")


def _existing(path: str) -> Path:
    resolved = Path(path)
    if not resolved.is_file():
        raise InvalidInputError(f"{path}: no such file")
    return resolved


def build_parser() -> CliParser:
    common = CliParser(add_help=False)
    common.add_argument("--out", default=".", help="Output directory")
    common.add_argument("--threads", type=int, default=None, help="Worker cap")
    common.add_argument("--verbose", action="store_true", help="DEBUG logging")

    parser = CliParser(
        prog="aniso",
        description="Exponents, transforms, Moser bookkeeping and extremals of the anisotropic Sobolev inequality",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    exponents = sub.add_parser(Command.EXPONENTS.value, parents=[common], help="Derived exponents")
    exponents.add_argument("--p", required=True, help="Exponents, e.g. 3/2,3/2,5")

    transform = sub.add_parser(Command.TRANSFORM.value, parents=[common], help="Scaling transforms")
    transform.add_argument("--p", required=True)
    transform.add_argument("--theta", required=True, help="Weights with sum 1/theta_i = n/p")
    transform.add_argument("--grad-integrals", default=None, help="G_i for sigma_theta")
    transform.add_argument("--lambda", dest="lam", default=None, help="Member of the scale family")
    transform.add_argument("--mass", default=None, help="Integral of |u|^{p*}")

    moser = sub.add_parser(Command.MOSER.value, parents=[common], help="Stopping-set enumeration")
    moser.add_argument("--p", required=True)
    moser.add_argument("--gamma", required=True)
    moser.add_argument("--eps", required=True)
    moser.add_argument("--i1", default="", help="1-based indices of I1")
    moser.add_argument("--i2", default=None, help="1-based indices of I2 (default: all)")
    moser.add_argument("--kmax", type=int, default=None)

    solve = sub.add_parser(Command.SOLVE.value, parents=[common], help="Constrained minimization")
    solve.add_argument("--config", required=True, help="JSON or YAML solver config")

    fit = sub.add_parser(Command.FIT.value, parents=[common], help="Tail slope of a field")
    fit.add_argument("--field", required=True)
    fit.add_argument("--axis", type=int, required=True, help="1-based axis")
    fit.add_argument("--window", required=True, help="lo,hi")
    fit.add_argument("--q", required=True)
    fit.add_argument("--p", default=None, help="Exponents, enables the predicted slope")
    fit.add_argument("--tolerance", type=float, default=SLOPE_TOLERANCE_SOLVER)

    support = sub.add_parser(Command.SUPPORT.value, parents=[common], help="Support extents of a field")
    support.add_argument("--field", required=True)
    support.add_argument("--threshold", type=float, required=True)
    support.add_argument("--i0", default=None, help="1-based indices for the r0 estimate")
    support.add_argument("--p", default=None, help="Exponents, enables the tail radius")
    support.add_argument("--kappa", type=float, default=None)

    return parser


# ============================================================================
# CONFIG FILES
# ============================================================================

def load_config_file(path: str) -> Dict[str, Any]:
    """Read a JSON (or .yaml/.yml) config; syntax errors carry line and column"""
    resolved = _existing(path)
    text = resolved.read_text(encoding="utf-8")
    if resolved.suffix.lower() in (".yaml", ".yml"):
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f" line {mark.line + 1} column {mark.column + 1}" if mark else ""
            raise InvalidInputError(f"{path}:{where} malformed YAML")
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(
                f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}"
            )
    if not isinstance(data, dict):
        raise InvalidInputError(f"{path}: config must be an object")
    return data


def solver_config(data: Dict[str, Any]) -> SolverConfig:
    """SolverConfig from a config file; a top-level "p" stands for ev.p"""
    data = dict(data)
    if "ev" not in data and "p" in data:
        data["ev"] = {"p": data.pop("p")}
    if isinstance(data.get("ev"), dict) and "p" in data["ev"]:
        data["ev"] = parse_exponent_vector(data["ev"])
    return SolverConfig.model_validate(data)


# ============================================================================
# RESULT DOCUMENTS
# ============================================================================

def document(command: Command, config: Any, result: Any) -> Dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command.value,
        "config": config,
        "result": result,
    }


def map_to_json(scaling: DiagonalMap) -> Dict[str, Any]:
    return {"amplitude": scaling.amplitude, "scales": list(scaling.scales)}


def derived_to_json(ev: ExponentVector, de: DerivedExponents) -> Dict[str, Any]:
    """Exact fields as "a/b" strings next to their decimals; index sets 1-based"""
    coefficients = phi_polynomial(ev, de, de.p_bar0) if de.p_bar0 is not None else None
    return {
        "n": ev.n,
        "p": list(ev.p),
        "p_harmonic": de.p_harmonic,
        "p_critical": de.p_critical,
        "p_serrin": de.p_serrin,
        "p_max": de.p_max,
        "p_min": de.p_min,
        "theta": one_based(de.theta),
        "p_bar0": de.p_bar0,
        "q0": de.q0,
        "q0_exact": de.q0_exact,
        "q0_raw_root": de.q0_raw_root,
        "i0": one_based(de.i0),
        "i0_complement": one_based(de.i0_complement),
        "regime": de.regime,
        "phi_coefficients": list(coefficients) if coefficients else None,
        "serrin_identity": serrin_identity_holds(ev),
        "decimals": de.decimals(),
    }


def trace_to_json(trace: IterationTrace) -> Dict[str, Any]:
    """Per-length path lists with their final gamma; paths are 1-based"""
    phi = {
        str(k): [
            {"path": one_based(path), "gamma": gamma}
            for path, gamma in zip(paths, trace.path_gammas[k])
        ]
        for k, paths in trace.phi.items()
    }
    return {
        "gamma0": trace.gamma0,
        "eps": trace.eps,
        "p0": trace.p0,
        "p_eps": trace.p_eps,
        "threshold": trace.threshold,
        "index_universe": one_based(trace.index_universe),
        "kminus": trace.kminus,
        "kplus": trace.kplus,
        "ladder": list(trace.ladder),
        "path_count": trace.path_count(),
        "phi": phi,
        "boundary_hits": [one_based(path) for path in trace.boundary_hits],
    }


# ============================================================================
# COMMANDS
# ============================================================================

def cmd_exponents(args: argparse.Namespace, out: Path) -> Dict[str, Any]:
    ev = parse_exponent_vector(args.p)
    de = analyze(ev)
    return document(Command.EXPONENTS, {"p": list(ev.p)}, derived_to_json(ev, de))


def cmd_transform(args: argparse.Namespace, out: Path) -> Dict[str, Any]:
    ev = parse_exponent_vector(args.p)
    theta = ThetaVector(theta=tuple(_items(args.theta)))
    grads = _floats(args.grad_integrals) if args.grad_integrals else None
    lam = float(args.lam) if args.lam is not None else None
    mass = float(args.mass) if args.mass is not None else None

    tau = tau_theta(ev, theta)
    result: Dict[str, Any] = {
        "scale_exponents": list(scale_exponents(ev)),
        "tau_theta": map_to_json(tau),
        "tau_theta_jacobian": tau.jacobian(),
    }
    if lam is not None:
        result["scale_family"] = map_to_json(scale_family(ev, lam))
    if grads is not None:
        sigma = sigma_theta(ev, theta, grads)
        result["sigma_theta"] = map_to_json(sigma)
        result["sigma_theta_jacobian"] = sigma.jacobian()
    if mass is not None:
        result["normalization"] = map_to_json(normalization_map(ev, mass))
        if grads is not None:
            lambda_u, rescale = euler_lagrange_rescale(ev, grads, mass)
            result["lambda_u"] = lambda_u
            result["euler_lagrange"] = map_to_json(rescale)

    config = {
        "p": list(ev.p),
        "theta": list(theta.theta),
        "grad_integrals": grads,
        "lambda": lam,
        "mass": mass,
    }
    return document(Command.TRANSFORM, config, result)


def cmd_moser(args: argparse.Namespace, out: Path) -> Dict[str, Any]:
    ev = parse_exponent_vector(args.p)
    gamma, eps = to_fraction(args.gamma), to_fraction(args.eps)
    i1 = _indices(args.i1) or []
    i2 = _indices(args.i2)
    if i2 is None:
        i2 = list(range(ev.n))
    trace = enumerate_phi(ev, (i1, i2), gamma, eps, kmax=args.kmax, max_workers=args.threads)
    logger.info("moser: %d stopping paths, k- = %d, k+ = %d", trace.path_count(), trace.kminus, trace.kplus)

    config = {
        "p": list(ev.p),
        "gamma": gamma,
        "eps": eps,
        "i1": one_based(i1),
        "i2": one_based(i2),
        "kmax": args.kmax,
    }
    return document(Command.MOSER, config, trace_to_json(trace))


def cmd_solve(args: argparse.Namespace, out: Path) -> Dict[str, Any]:
    config = solver_config(load_config_file(args.config))
    report = minimize(config)
    if not report.converged:
        logger.warning("solver stopped before convergence after %d iterations", report.iterations)

    save_field(out / "solution.field", report.field)
    export_axis_slice_csv(out / "solution_slice.csv", report.field, 0)

    _, rescale = report_euler_lagrange(report, config.ev)
    result = report.summary()
    result.update({
        "sobolev_quotient": sobolev_quotient(report.field, config.ev),
        "product_quotient": product_quotient(report.field, config.ev),
        "euler_lagrange": map_to_json(rescale),
        "center_value": report.field.center_value(),
        "field_file": "solution.field",
    })
    return document(Command.SOLVE, config, result)


def cmd_fit(args: argparse.Namespace, out: Path) -> Dict[str, Any]:
    field = load_field(_existing(args.field))
    axis = _indices(str(args.axis))[0]
    window = _floats(args.window)
    if len(window) != 2:
        raise InvalidInputError("window must be lo,hi")
    q = to_fraction(args.q)

    ev = parse_exponent_vector(args.p) if args.p else None
    predicted = predicted_slope(ev, q, axis) if ev is not None else None
    report = fit_tail_slope(
        field, axis, (window[0], window[1]), predicted=predicted, tolerance=args.tolerance
    )
    if ev is not None:
        axes = [i for i, pi in enumerate(ev.p) if q > pi]
        constant = fit_envelope_constant(field, ev, q, axes)
        report = report.model_copy(update={"fitted_c": constant})

    write_csv(
        out / "fit_ray.csv", ["radius", "value", "residual"], ray_samples(field, report)
    )
    result = report.model_dump(by_alias=True)
    result["axis"] = axis + 1
    config = {
        "field": args.field,
        "axis": axis + 1,
        "window": window,
        "q": q,
        "p": list(ev.p) if ev is not None else None,
        "tolerance": args.tolerance,
    }
    return document(Command.FIT, config, result)


def cmd_support(args: argparse.Namespace, out: Path) -> Dict[str, Any]:
    field = load_field(_existing(args.field))
    i0 = _indices(args.i0) or []
    report = detect_support(field, args.threshold, i0)
    result = report.model_dump()
    result["vanishing_axes"] = one_based(report.vanishing_axes)

    ev = parse_exponent_vector(args.p) if args.p else None
    if (ev is None) != (args.kappa is None):
        raise InvalidInputError("--p and --kappa must be given together")
    if ev is not None:
        result["tail_radius"] = tail_radius(field, ev, args.kappa)

    config = {
        "field": args.field,
        "threshold": args.threshold,
        "i0": one_based(i0),
        "p": list(ev.p) if ev is not None else None,
        "kappa": args.kappa,
    }
    return document(Command.SUPPORT, config, result)


COMMANDS = {
    Command.EXPONENTS: cmd_exponents,
    Command.TRANSFORM: cmd_transform,
    Command.MOSER: cmd_moser,
    Command.SOLVE: cmd_solve,
    Command.FIT: cmd_fit,
    Command.SUPPORT: cmd_support,
}


# ============================================================================
# ERROR HANDLING
# ============================================================================

def _validation_message(exc: ValidationError) -> str:
    messages = []
    for error in exc.errors():
        message = error["msg"]
        if message.startswith("Value error, "):
            message = message[len("Value error, "):]
        location = ".".join(str(part) for part in error.get("loc", ()))
        messages.append(f"{location}: {message}" if location else message)
    return "; ".join(messages)


def _report_error(message: str, kind: str) -> None:
    response = ErrorResponse(error=message, detail=kind)
    sys.stderr.write(render_json(response))


# ============================================================================
# ENTRY POINT
# ============================================================================

def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse argv, dispatch, write artifacts.

    Returns:
        Exit code: 0 success, 1 invalid input, 2 numerical failure
    """
    try:
        args = build_parser().parse_args(argv)
        run_config = RunConfig(
            command=Command(args.command),
            out_dir=args.out,
            threads=args.threads,
            verbose=args.verbose,
        )
        setup_logging(run_config.verbose)

        out = Path(run_config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result = COMMANDS[run_config.command](args, out)
        text = write_json(out / f"{run_config.command.value}.json", result)
        sys.stdout.write(text)
        return 0

    except ValidationError as exc:
        _report_error(_validation_message(exc), "ValidationError")
        return 1
    except AnisoError as exc:
        logger.debug("command failed", exc_info=True)
        _report_error(str(exc), type(exc).__name__)
        return exc.exit_code
    except (ValueError, ZeroDivisionError) as exc:
        _report_error(str(exc), "InvalidInputError")
        return 1
    except OSError as exc:
        _report_error(str(exc), "IOError")
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
