"""Command-line entry point.

Exit codes: 0 success, 1 unknown subcommand, 2 invalid input, 3 numerical
failure.
"""

import argparse
import json
import sys

from .exceptions import NumericalError
from .flow import VelocityField, flow_map, lipschitz_certificate
from .harness import StudyConfig, convergence_study, write_rate_csv
from .limit import equation_residual, mass_loss_check, solve_limit
from .measures import DensitySpec, density_from_json, dual_bl_norm, measure_from_json, tv_norm
from .regularized import AbsorptionParams, Regularizer, solve_closed_form, solve_picard
from .stochastic import simulate

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2, 3


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(f"{self.prog}: {message}")


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed JSON in {path}: {exc}") from None


def _emit(obj, out=None):
    text = json.dumps(obj, indent=2)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    print(text)


def _velocity(args, cfg):
    if args.velocity:
        return VelocityField.from_json(_load_json(args.velocity))
    if "velocity" in cfg:
        return VelocityField.from_json(cfg["velocity"])
    raise InputError("no velocity given (use --velocity or a 'velocity' key in the config)")


def _initial_obj(args, cfg):
    if args.measure:
        return _load_json(args.measure)
    if "initial" in cfg:
        return cfg["initial"]
    raise InputError("no initial data given (use --measure or an 'initial' key in the config)")


def _config(args):
    return _load_json(args.config) if args.config else {}


def cmd_norm(args):
    m = measure_from_json(_load_json(args.measure), K=args.atoms)
    _emit({"tv": tv_norm(m), "dual_bl": dual_bl_norm(m)})


def cmd_flow(args):
    v = VelocityField.from_json(_load_json(args.velocity))
    out = flow_map(v, args.x0, args.t).to_json()
    if args.certificate:
        rep = lipschitz_certificate(v, args.t, samples=args.samples)
        out["certificate"] = {"spatial_estimate": rep.spatial_estimate,
                              "spatial_bound": rep.spatial_bound,
                              "temporal_estimate": rep.temporal_estimate,
                              "temporal_bound": rep.temporal_bound,
                              "passed": rep.passed}
    _emit(out)


def cmd_solve_regularized(args):
    cfg = _config(args)
    v = _velocity(args, cfg)
    mu0 = measure_from_json(_initial_obj(args, cfg), K=int(cfg.get("K", args.atoms)))
    f = Regularizer(cfg.get("n", args.n))
    a = AbsorptionParams(cfg.get("a", args.a))
    T, dt = float(cfg.get("T", args.T)), float(cfg.get("dt", args.dt))
    if args.method == "picard":
        traj = solve_picard(v, f, a, mu0, T, dt, tol=float(cfg.get("tol", args.tol)),
                            max_iter=int(cfg.get("max_iter", args.max_iter)))
    else:
        traj = solve_closed_form(v, f, a, mu0, T, dt)
    traj.write_csv(args.out)
    summary = {"method": args.method, "n": f.n, "a": a.rate, "T": T, "dt": dt,
               "terminal_mass": traj.terminal.total_mass, "trajectory_csv": args.out}
    if "iterations" in traj.info:
        summary["iterations"] = traj.info["iterations"]
        summary["residual"] = traj.info["residual"]
    _emit(summary)


def cmd_solve_limit(args):
    cfg = _config(args)
    v = _velocity(args, cfg)
    mu0 = measure_from_json(_initial_obj(args, cfg), K=int(cfg.get("K", args.atoms)))
    a = AbsorptionParams(cfg.get("a", args.a))
    T, dt = float(cfg.get("T", args.T)), float(cfg.get("dt", args.dt))
    sol = solve_limit(v, a, mu0, T, dt)
    sol.write_csv(args.out)
    _emit({"a": a.rate, "T": T, "dt": dt,
           "terminal_mass": sol.trajectory.terminal.total_mass,
           "absorbed_mass": float(sol.absorbed_mass[-1]),
           "mass_loss_discrepancy": mass_loss_check(sol).max_discrepancy,
           "equation_residual": float(equation_residual(sol).max()),
           "trajectory_csv": args.out})


def cmd_simulate(args):
    cfg = _config(args)
    v = _velocity(args, cfg)
    obj = _initial_obj(args, cfg)
    init = density_from_json(obj) if "density" in obj else measure_from_json(obj)
    rate = cfg.get("a", args.a)
    try:
        times = [float(t) for t in args.times.split(",")] if args.times else cfg["times"]
    except (KeyError, ValueError):
        raise InputError("--times must be a comma-separated list of numbers") from None
    report = simulate(v, rate, init, args.particles, args.seed, times, bins=args.bins)
    _emit(report.to_json(), args.out)


def cmd_convergence(args):
    cfg = StudyConfig.from_json(_load_json(args.config))
    report = convergence_study(cfg)
    path = args.out or cfg.output_path
    write_rate_csv(report, path)
    summary = report.summary()
    summary["rate_csv"] = path
    _emit(summary)


def _common_solver_args(p, picard=False):
    p.add_argument("--config", help="JSON config with n, a, T, dt, tol, max_iter (flags are fallbacks)")
    p.add_argument("--velocity", help="velocity JSON file")
    p.add_argument("--measure", help="initial measure JSON file (atoms or density)")
    p.add_argument("--a", type=float, default=1.0, help="absorption rate")
    p.add_argument("--T", type=float, default=1.0, help="final time")
    p.add_argument("--dt", type=float, default=1e-3, help="grid step (must divide T)")
    p.add_argument("--atoms", type=int, default=1000, help="quadrature atoms for density input")
    p.add_argument("--out", default="trajectory.csv", help="trajectory CSV path")


def build_parser():
    parser = _Parser(prog="stickyflow",
                     description="Measure transport on [0, 1] with a sticky absorbing boundary.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("norm", help="total variation and flat norm of a measure")
    p.add_argument("--measure", required=True, help="measure JSON file")
    p.add_argument("--atoms", type=int, default=1000, help="quadrature atoms for density input")
    p.set_defaults(func=cmd_norm)

    p = sub.add_parser("flow", help="flow map, hitting time and interior time")
    p.add_argument("--velocity", required=True, help="velocity JSON file")
    p.add_argument("--x0", type=float, required=True, help="starting point in [0, 1]")
    p.add_argument("--t", type=float, required=True, help="time")
    p.add_argument("--certificate", action="store_true", help="also report sampled Lipschitz constants")
    p.add_argument("--samples", type=int, default=1000, help="spatial samples for the certificate")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("solve-regularized", help="boundary-layer solution, written as trajectory CSV")
    _common_solver_args(p)
    p.add_argument("--n", type=int, default=2, help="layer parameter of f_n")
    p.add_argument("--method", choices=("closed-form", "picard"), default="closed-form")
    p.add_argument("--tol", type=float, default=1e-8, help="Picard tolerance")
    p.add_argument("--max-iter", type=int, default=100, dest="max_iter", help="Picard iteration cap")
    p.set_defaults(func=cmd_solve_regularized)

    p = sub.add_parser("solve-limit", help="limit solution with boundary and absorbed mass")
    _common_solver_args(p)
    p.set_defaults(func=cmd_solve_limit)

    p = sub.add_parser("simulate", help="Monte Carlo particles against the limit survival law")
    p.add_argument("--config", help="JSON config with velocity, initial, a and times")
    p.add_argument("--velocity", help="velocity JSON file")
    p.add_argument("--measure", help="initial measure JSON file (atoms or density)")
    p.add_argument("--a", type=float, default=1.0, help="absorption rate")
    p.add_argument("--particles", type=int, required=True, help="number of particles N")
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    p.add_argument("--times", help="comma-separated evaluation times, e.g. 0.5,1.0,1.5")
    p.add_argument("--bins", type=int, default=10, help="interior histogram bins")
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("convergence", help="rate study of regularized towards limit solutions")
    p.add_argument("--config", required=True, help="study JSON config")
    p.add_argument("--out", help="rate CSV path (default: output_path from the config)")
    p.set_defaults(func=cmd_convergence)
    return parser


def cli_dispatch(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    commands = set(parser._subparsers._group_actions[0].choices)
    if not argv or (not argv[0].startswith("-") and argv[0] not in commands):
        if argv:
            print(f"stickyflow: unknown command {argv[0]!r}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except NumericalError as exc:
        print(f"stickyflow: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InputError, ValueError, KeyError, TypeError) as exc:
        print(f"stickyflow: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def main():
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
