"""Command-line front end.

Subcommands: `run` executes an experiment config, `verify` runs the oracle
cross-check suite, `gridworld` generates or prints benchmark instances,
`diag` computes convergence diagnostics from a run directory, and `report`
renders figures next to a run's CSVs. Exit codes: 0 success, 1 check
failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys

from ..fixtures import FIXTURES
from ..gridworld import (CANONICAL_SIDES, GridSpec, anti_diagonal_hazards,
                         build_gridworld, canonical_spec, describe_grid)
from ..model_io import save_model_file
from .config import ConfigError, ExperimentConfig

EXIT_OK = 0
EXIT_CHECK_FAILURE = 1
EXIT_CONFIG_ERROR = 2


def _cmd_run(args) -> int:
    from .experiment import run_experiment
    config = ExperimentConfig.from_file(args.config)
    summary = run_experiment(config)
    print(f"wrote {config.out_dir} (config hash {summary.config_hash})")
    print(f"window mean cost {summary.mean_cost:.6g} "
          f"+/- {summary.stderr_cost:.3g} over {summary.n_seeds} seeds")
    for k, (m, se) in enumerate(zip(summary.mean_constraints,
                                    summary.stderr_constraints)):
        print(f"window mean constraint {k + 1}: {m:.6g} +/- {se:.3g}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    from .verify import verify_suite
    target = args.fixture if args.fixture else args.model
    report = verify_suite(target)
    print(report.render())
    return EXIT_OK if report.ok else EXIT_CHECK_FAILURE


def _grid_spec_from_args(args) -> GridSpec:
    if args.canonical:
        return canonical_spec(args.side)
    hazards = anti_diagonal_hazards(args.side, density=args.hazard_density) \
        if args.hazard_density > 0 else frozenset()
    return GridSpec(side=args.side, hazard_cells=hazards,
                    cost_seed=args.cost_seed, alpha=args.alpha)


def _cmd_gridworld(args) -> int:
    spec = _grid_spec_from_args(args)
    if args.action == "describe":
        print(describe_grid(spec))
        return EXIT_OK
    model = build_gridworld(spec)
    save_model_file(model, args.out)
    print(f"wrote {args.out} ({model.n_states} states)")
    return EXIT_OK


def _cmd_diag(args) -> int:
    from .diagnostics import (critic_error_diagnostic_from_run,
                              rate_diagnostic_from_run)
    if args.kind == "rate":
        fits = rate_diagnostic_from_run(args.run_dir)
        failed = False
        for seed, fit in sorted(fits.items()):
            if fit is None:
                print(f"seed {seed}: skipped "
                      "(needs at least three decades of iterations)")
                continue
            print(f"seed {seed}: slope {fit.slope:.4f} over "
                  f"t in [{fit.t_lo:.3g}, {fit.t_hi:.3g}] "
                  f"({fit.n_points} points)")
            failed = failed or fit.slope > args.slope_bound
        return EXIT_CHECK_FAILURE if failed else EXIT_OK
    curves = critic_error_diagnostic_from_run(args.run_dir)
    for seed, data in sorted(curves.items()):
        print(f"seed {seed}: averaged error {data['curve'][0]:.4g} -> "
              f"{data['curve'][-1]:.4g} "
              f"(tv fit b {data['tv_b']:.3g}, k {data['tv_k']:.3g})")
    return EXIT_OK


def _cmd_report(args) -> int:
    from .report import render_figures
    written = render_figures(args.run_dir)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="camdp",
        description="Constrained average-cost actor-critic experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("config")
    p_run.set_defaults(func=_cmd_run)

    p_verify = sub.add_parser("verify", help="oracle and assumption checks")
    group = p_verify.add_mutually_exclusive_group(required=True)
    group.add_argument("--fixture", choices=sorted(FIXTURES))
    group.add_argument("--model", help="path to a model file")
    p_verify.set_defaults(func=_cmd_verify)

    p_grid = sub.add_parser("gridworld", help="generate or describe grids")
    p_grid.add_argument("action", choices=("generate", "describe"))
    p_grid.add_argument("--side", type=int, default=5,
                        help=f"grid side, canonical sides are {CANONICAL_SIDES}")
    p_grid.add_argument("--canonical", action="store_true",
                        help="use the benchmark hazard/cost layout")
    p_grid.add_argument("--cost-seed", type=int, default=0)
    p_grid.add_argument("--hazard-density", type=float, default=0.0)
    p_grid.add_argument("--alpha", type=float, default=0.5)
    p_grid.add_argument("--out", default="grid.cmdp")
    p_grid.set_defaults(func=_cmd_gridworld)

    p_diag = sub.add_parser("diag", help="convergence diagnostics")
    p_diag.add_argument("kind", choices=("rate", "critic-error"))
    p_diag.add_argument("run_dir")
    p_diag.add_argument("--slope-bound", type=float, default=0.0,
                        help="rate: fail when the fitted slope exceeds this")
    p_diag.set_defaults(func=_cmd_diag)

    p_report = sub.add_parser("report", help="render figures for a run")
    p_report.add_argument("run_dir")
    p_report.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
