"""Command line front end: ``orthocal simulate|calibrate|verify|accuracy|fk|ik``.

Exit codes: 0 success, 2 configuration error, 3 unreachable posture or
point, 4 bad measurement data, 5 solver failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .accuracy import NoiseModel, analytic_covariance, monte_carlo_covariance
from .differential import posture_jacobian
from .errors import (DidNotConverge, GaugeMiss, IncompleteSet, NoRealSolution, OrthocalError,
                     OutOfReach, RankDeficient, SingularJoint, SingularPosture, Unreachable)
from .geometry import AXES, PROTOTYPE, GeometryConfig, ParameterSet, all_postures, to_absolute, to_relative
from .identification import (ParameterSubset, build_system, calibration_matrix, expected_improvement,
                             fit_aggregated, rms, solve_linear, solve_nonlinear)
from .kinematics import constraint_residuals, direct_kinematics, inverse_kinematics, leg_angles
from .measurement import (CANONICAL_ORDER, GAUGE_RESOLUTION_MM, AggregatedDeviations, MeasurementSet,
                          label, load_measurements, predict_deviations_exact, simulate_readings)

EXIT_OK, EXIT_CONFIG, EXIT_REACH, EXIT_DATA, EXIT_SOLVER = 0, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


# --- input helpers -------------------------------------------------------


def _read_json(path, code, what):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise CliError(code, f"{what} file not found: {path}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(code, f"cannot read {what} file {path}: {exc}") from None


def load_config(path, mode=None) -> GeometryConfig:
    config = PROTOTYPE
    if path:
        try:
            config = GeometryConfig.from_json(_read_json(path, EXIT_CONFIG, "config"))
        except (ValueError, TypeError) as exc:
            raise CliError(EXIT_CONFIG, f"invalid config {path}: {exc}") from None
    if mode:
        try:
            config = GeometryConfig(**{**config.to_json(), "posture_command_mode": mode})
        except ValueError as exc:
            raise CliError(EXIT_CONFIG, str(exc)) from None
    return config


def resolve_data_path(path) -> Path:
    """Use ``path`` if it exists, else a bundled data file of the same name."""
    p = Path(path)
    if p.exists():
        return p
    bundled = resources.files("orthocal") / "data" / p.name
    if bundled.is_file():
        return Path(str(bundled))
    return p


def load_measurement_file(path):
    p = resolve_data_path(path)
    if not p.exists():
        raise CliError(EXIT_DATA, f"measurement file not found: {path}")
    try:
        data = load_measurements(p)
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_DATA, f"invalid measurement file {path}: {exc}") from None
    if isinstance(data, MeasurementSet):
        try:
            data.validate()
        except IncompleteSet as exc:
            raise CliError(EXIT_DATA, f"{path}: {exc}") from None
    return data


def load_params(args, config):
    """Parameters from ``--params FILE`` (a parameter set or calibration result) and/or inline flags."""
    result_obj = None
    params = ParameterSet.nominal(config)
    if getattr(args, "params", None):
        obj = _read_json(args.params, EXIT_CONFIG, "parameter")
        if isinstance(obj, dict) and "parameters" in obj:
            result_obj, obj = obj, obj["parameters"]
        try:
            params = ParameterSet.from_json(obj, config)
        except ValueError as exc:
            raise CliError(EXIT_CONFIG, f"invalid parameter file {args.params}: {exc}") from None
    drho = getattr(args, "drho", None)
    dL = getattr(args, "dl", None)
    if drho is not None or dL is not None:
        theta = params.theta(config)
        if drho is not None:
            theta[:3] = drho
        if dL is not None:
            theta[3:] = dL
        try:
            params = ParameterSet.from_theta(theta, config)
        except ValueError as exc:
            raise CliError(EXIT_CONFIG, str(exc)) from None
    return params, result_obj


def _emit(args, document, table_lines):
    text = json.dumps(document, indent=2) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    if args.json:
        sys.stdout.write(text)
    else:
        sys.stdout.write("\n".join(table_lines) + "\n")


def _fmt(v, width=8, digits=3):
    return f"{v:{width}.{digits}f}"


# --- subcommands ---------------------------------------------------------


def cmd_simulate(args) -> int:
    config = load_config(args.config, args.posture_command_mode)
    params, _ = load_params(args, config)
    controller = None
    if args.controller:
        controller = ParameterSet.from_json(_read_json(args.controller, EXIT_CONFIG, "controller"), config)
    if args.sigma_mm < 0 or args.repeats < 1:
        raise CliError(EXIT_CONFIG, "--sigma-mm must be >= 0 and --repeats >= 1")
    quant = GAUGE_RESOLUTION_MM if args.quantize else None
    ms = simulate_readings(params, config, args.sigma_mm, args.seed, args.repeats, quant, controller)
    document = ms.to_json()
    document["provenance"]["true_parameters"] = params.to_json(config)
    text = json.dumps(document, indent=2) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    if args.json or not args.output:
        sys.stdout.write(text)
    else:
        lines = [f"Simulated deviations (sigma {args.sigma_mm} mm, seed {args.seed}, repeats {args.repeats})"]
        lines += [f"  {label(e.key):8s}{_fmt(e.value, 10, 4)}" for e in ms.entries]
        lines.append(f"written to {args.output}")
        sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def _jacobian_dump(config):
    return {
        "columns": ["drho_x", "drho_y", "drho_z", "dL_x", "dL_y", "dL_z"],
        "A_rows": [label(k) for k in CANONICAL_ORDER],
        "A": calibration_matrix(config).tolist(),
        "postures": {str(p): posture_jacobian(p, config).J.tolist() for p in all_postures()},
    }


def _parameter_lines(theta, subset):
    names = ("drho_x", "drho_y", "drho_z", "dL_x", "dL_y", "dL_z")
    header = "  " + "".join(f"{n:>9s}" for n in names)
    values = "  " + "".join(f"{theta[c]:9.3f}" if c in subset.columns else f"{'-':>9s}"
                            for c in range(6))
    return [header, values]


def _improvement_lines(table):
    lines = ["Max-minus-Min deviations [mm], offsets fitted to these alone",
             "  " + " " * 10 + "".join(f"{lab:>8s}" for lab in table.labels) + f"{'r.m.s.':>8s}"]
    lines.append("  measured  " + "".join(f"{v:+8.2f}" for v in table.before) + f"{table.rms_before:8.2f}")
    lines.append("  expected  " + "".join(f"{v:+8.2f}" for v in table.after) + f"{table.rms_after:8.2f}")
    return lines


def cmd_calibrate(args) -> int:
    config = load_config(args.config, args.posture_command_mode)
    data = load_measurement_file(args.measurements)
    subset = ParameterSubset.parse(args.subset)
    if isinstance(data, AggregatedDeviations):
        if args.method != "linear":
            raise CliError(EXIT_DATA, "aggregated data sets only support --method linear")
        if subset is ParameterSubset.FULL:
            raise CliError(EXIT_SOLVER, "the six Max-minus-Min deviations cannot identify all six "
                                        "parameters; use --subset rho or --subset L")
        result = fit_aggregated(data, config, subset)
        singular = np.linalg.svd(calibration_matrix(config), compute_uv=False)
    else:
        system = build_system(data, config)
        if args.method == "linear":
            result = solve_linear(system, subset)
        else:
            result = solve_nonlinear(data, config, subset, max_iter=args.max_iter)
        singular = system.singular_values
    # offsets fitted to the Max-minus-Min deviations, usable for every data set
    improvement = expected_improvement(data, config=config)

    document = {
        "input": str(args.measurements),
        "config": config.to_json(),
        "result": result.to_json(config),
        "singular_values_A": [float(s) for s in singular],
        "expected_improvement": improvement.to_json(),
    }
    if args.dump_jacobian:
        document["jacobians"] = _jacobian_dump(config)

    lines = [f"Calibration of {args.measurements} ({result.method}, subset {subset.value})", ""]
    lines.append(f"  {'deviation':10s}{'measured':>10s}{'predicted':>11s}{'residual':>10s}")
    for lab, before, after in zip(result.labels, result.residuals_before, result.residuals_after):
        lines.append(f"  {lab:10s}{before:10.3f}{before - after:11.3f}{after:10.3f}")
    lines.append(f"  {'r.m.s.':10s}{result.rms_before:10.3f}{'':11s}{result.rms_after:10.3f}")
    lines += ["", "Identified parameters [mm]"] + _parameter_lines(result.theta, subset)
    lines += ["", *_improvement_lines(improvement)]
    if result.method == "nonlinear":
        lines.append(f"\n  iterations: {result.iterations}")
    _emit(args, document, lines)
    if args.dump_jacobian and not args.json:
        sys.stdout.write(json.dumps(document["jacobians"], indent=2) + "\n")
    return EXIT_OK


def cmd_verify(args) -> int:
    config = load_config(args.config, args.posture_command_mode)
    data = load_measurement_file(args.measurements)
    if isinstance(data, AggregatedDeviations):
        raise CliError(EXIT_DATA, "verify needs the twelve individual deviations")
    params, result_obj = load_params(args, config)
    measured = data.vector()
    expected = None
    if result_obj is not None and result_obj.get("labels") == [label(k) for k in CANONICAL_ORDER]:
        expected = np.array(result_obj["residuals_after_mm"], dtype=float)

    if args.installed:
        # parameters were already in the controller: readings are the residuals
        predicted = np.zeros(12)
    elif args.model == "linear":
        predicted = calibration_matrix(config) @ params.theta(config)
    else:
        predicted = predict_deviations_exact(params, config).vector()
    residual = measured - predicted

    document = {
        "input": str(args.measurements),
        "parameters": params.to_json(config),
        "installed": bool(args.installed),
        "labels": [label(k) for k in CANONICAL_ORDER],
        "measured_mm": measured.tolist(),
        "predicted_mm": predicted.tolist(),
        "residual_mm": residual.tolist(),
        "rms_measured_mm": rms(measured),
        "rms_residual_mm": rms(residual),
        "max_abs_residual_mm": float(np.max(np.abs(residual))),
    }
    if expected is not None:
        document["expected_residual_mm"] = expected.tolist()
        document["rms_expected_mm"] = rms(expected)

    mode = "parameters installed in controller" if args.installed else f"{args.model} model prediction"
    lines = [f"Verification of {args.measurements} ({mode})", ""]
    head = f"  {'deviation':10s}{'measured':>10s}{'predicted':>11s}{'residual':>10s}"
    if expected is not None:
        head += f"{'expected':>10s}"
    lines.append(head)
    for n, key in enumerate(CANONICAL_ORDER):
        row = f"  {label(key):10s}{measured[n]:10.3f}{predicted[n]:11.3f}{residual[n]:10.3f}"
        if expected is not None:
            row += f"{expected[n]:10.3f}"
        lines.append(row)
    tail = f"  {'r.m.s.':10s}{rms(measured):10.3f}{'':11s}{rms(residual):10.3f}"
    if expected is not None:
        tail += f"{rms(expected):10.3f}"
    lines.append(tail)
    lines.append(f"  max |residual| = {document['max_abs_residual_mm']:.3f} mm, "
                 f"r.m.s. residual = {document['rms_residual_mm']:.3f} mm")
    _emit(args, document, lines)
    return EXIT_OK


def cmd_accuracy(args) -> int:
    config = load_config(args.config, args.posture_command_mode)
    if args.sigma_mm < 0 or args.repeats < 1:
        raise CliError(EXIT_CONFIG, "--sigma-mm must be >= 0 and --repeats >= 1")
    if args.trials is not None and args.trials < 100:
        raise CliError(EXIT_CONFIG, "--trials must be at least 100")
    params, _ = load_params(args, config)
    noise = NoiseModel(args.sigma_mm, args.repeats)
    A = calibration_matrix(config)
    subsets = ([ParameterSubset.parse(args.subset)] if args.subset
               else [ParameterSubset.FULL, ParameterSubset.OFFSETS_ONLY, ParameterSubset.LENGTHS_ONLY])
    reports = []
    lines = [f"Identification accuracy for sigma = {noise.sigma} mm, repeats = {noise.repeats}"]
    for subset in subsets:
        analytic = analytic_covariance(A, noise, subset)
        entry = {"analytic": analytic.to_json()}
        mc = None
        if args.trials:
            mc = monte_carlo_covariance(params, config, noise, args.trials, args.seed, subset)
            entry["monte_carlo"] = mc.to_json()
        if noise.repeats == 1:
            entry["std_devs_if_averaged_over_3_mm"] = (analytic.std_devs / math.sqrt(3)).tolist()
        reports.append(entry)

        lines += ["", f"subset {subset.value}:",
                  f"  {'parameter':10s}{'analytic':>10s}{'uncorr.':>10s}" + (f"{'MC':>10s}" if mc else "")]
        for n, name in enumerate(analytic.parameter_names):
            row = (f"  {name:10s}{analytic.std_devs[n]:10.4f}"
                   f"{analytic.std_devs_uncorrelated[n]:10.4f}")
            if mc:
                row += f"{mc.std_devs[n]:10.4f}"
            lines.append(row)
        if mc:
            lines.append(f"  ({mc.n_trials} trials, seed {args.seed}, centred on true parameters)")
    lines.append("")
    lines.append("'uncorr.' ignores the shared Zero reading of the Max and Min deviations.")
    _emit(args, {"config": config.to_json(), "reports": reports}, lines)
    return EXIT_OK


def _vector_lines(name, v, unit="mm"):
    return [f"{name}: " + " ".join(f"{x:.6f}" for x in v) + f" [{unit}]"]


def cmd_ik(args) -> int:
    config = load_config(args.config)
    params, _ = load_params(args, config)
    p = np.array(args.point, dtype=float)
    sol = inverse_kinematics(p, params, config=config)
    rho = to_relative(sol.rho, config) if args.relative else sol.rho
    res = constraint_residuals(p, sol.rho, params)
    document = {"p_mm": p.tolist(), "rho_mm": rho.tolist(), "relative": bool(args.relative),
                "within_limits": sol.reachable, "residuals_mm2": res.tolist()}
    lines = [" ".join(f"{x:.6f}" for x in rho)]
    if not sol.reachable:
        lines.append("warning: outside the software joint limits")
    lines += _vector_lines("residuals", res, "mm^2")
    _emit(args, document, lines)
    return EXIT_OK


def cmd_fk(args) -> int:
    config = load_config(args.config)
    params, _ = load_params(args, config)
    rho = np.array(args.joints, dtype=float)
    if args.relative:
        rho = to_absolute(rho, config)
    p = direct_kinematics(rho, params)
    res = constraint_residuals(p, rho, params)
    angles = leg_angles(p, rho, params)
    document = {"rho_mm": rho.tolist(), "p_mm": p.tolist(), "residuals_mm2": res.tolist(),
                "theta_deg": np.degrees(angles.theta).tolist(),
                "beta_deg": np.degrees(angles.beta).tolist()}
    lines = [" ".join(f"{x:.6f}" for x in p)]
    lines += _vector_lines("residuals", res, "mm^2")
    for i, axis in enumerate(AXES):
        # + 0.0 turns -0.0 into 0.0 for printing
        lines.append(f"leg {axis}: theta {math.degrees(angles.theta[i]) + 0.0:.4f} deg, "
                     f"beta {math.degrees(angles.beta[i]) + 0.0:.4f} deg")
    _emit(args, document, lines)
    return EXIT_OK


# --- parser --------------------------------------------------------------


def _common(suppress):
    default = argparse.SUPPRESS if suppress else None
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", metavar="PATH", default=default, help="geometry config JSON")
    parent.add_argument("--output", metavar="PATH", default=default, help="write the JSON report here")
    parent.add_argument("--json", action="store_true", default=argparse.SUPPRESS if suppress else False,
                        help="print JSON instead of tables")
    return parent


def _vec3(text):
    return float(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orthocal", parents=[_common(False)],
                                     description="Leg-parallelism calibration of 3-dof translational parallel machines.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common(True)

    def params_flags(p):
        p.add_argument("--params", metavar="PATH", help="parameter set or calibration result JSON")
        p.add_argument("--drho", nargs=3, type=float, metavar=("X", "Y", "Z"), help="joint offsets [mm]")
        p.add_argument("--dl", "--dL", nargs=3, type=float, metavar=("X", "Y", "Z"), dest="dl",
                       help="leg length errors [mm]")

    def mode_flag(p):
        p.add_argument("--posture-command-mode", choices=["cartesian_nominal_ik", "direct_joint"])

    p = sub.add_parser("simulate", parents=[common], help="simulate a gauge experiment")
    params_flags(p)
    mode_flag(p)
    p.add_argument("--sigma-mm", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--quantize", action="store_true", help=f"round readings to {GAUGE_RESOLUTION_MM} mm")
    p.add_argument("--controller", metavar="PATH", help="parameters installed in the controller")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", parents=[common], help="identify parameters from measurements")
    p.add_argument("measurements")
    p.add_argument("--subset", default="full", choices=["full", "rho", "L"])
    p.add_argument("--method", default="linear", choices=["linear", "nonlinear"])
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--dump-jacobian", action="store_true")
    mode_flag(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("verify", parents=[common], help="compare measurements with identified parameters")
    p.add_argument("measurements")
    params_flags(p)
    p.add_argument("--installed", action="store_true",
                   help="the parameters were active in the controller while measuring")
    p.add_argument("--model", choices=["exact", "linear"], default="exact")
    mode_flag(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("accuracy", parents=[common], help="parameter uncertainty for a noise level")
    params_flags(p)
    mode_flag(p)
    p.add_argument("--sigma-mm", type=float, default=0.01)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subset", choices=["full", "rho", "L"])
    p.set_defaults(func=cmd_accuracy)

    p = sub.add_parser("ik", parents=[common], help="inverse kinematics of a TCP point")
    p.add_argument("point", nargs=3, type=float, metavar=("X", "Y", "Z"))
    p.add_argument("--relative", action="store_true", help="print controller joint coordinates")
    params_flags(p)
    p.set_defaults(func=cmd_ik)

    p = sub.add_parser("fk", parents=[common], help="direct kinematics of joint coordinates")
    p.add_argument("joints", nargs=3, type=float, metavar=("R1", "R2", "R3"))
    p.add_argument("--relative", action="store_true", help="joints are controller coordinates")
    params_flags(p)
    p.set_defaults(func=cmd_fk)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in (("config", None), ("output", None), ("json", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"orthocal: error: {exc}", file=sys.stderr)
        return exc.code
    except (OutOfReach, Unreachable, GaugeMiss, NoRealSolution, SingularJoint) as exc:
        print(f"orthocal: unreachable: {exc}", file=sys.stderr)
        return EXIT_REACH
    except IncompleteSet as exc:
        print(f"orthocal: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (RankDeficient, DidNotConverge, SingularPosture) as exc:
        print(f"orthocal: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OrthocalError as exc:
        print(f"orthocal: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
