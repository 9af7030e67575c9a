"""Command line entry point ``minimax-meta``.

Exit status: 0 on success, 2 on a configuration error, 3 when a run aborts
on a non-finite or runaway gradient.
"""

from __future__ import annotations

import argparse
import sys

from ..errors import ConfigError, RunAborted
from ..geometry import FeasibleSet, project_ball, project_simplex
from .config import load_spec, parse_vector
from .runner import format_float, rate_sweep, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 2, 3


def _positive_int(text):
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if n < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minimax-meta",
        description="Min-max meta-learning by stochastic gradient descent-ascent.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_ in (("run", "run DA-MAML (and optionally the MAML baseline)"),
                        ("rate-sweep", "fit empirical convergence rates over a T sweep")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("spec", help="experiment spec (INI)")
        p.add_argument("--jobs", type=_positive_int, default=1, help="parallel runs")
        p.add_argument("--output", default=None, help="output directory override")

    p = sub.add_parser("project", help="project a vector onto the simplex or a ball",
                       description="Use '--' before a vector that starts with '-'.")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--simplex", action="store_true", help="probability simplex")
    group.add_argument("--ball", type=float, metavar="R", help="ball of radius R")
    p.add_argument("--center", default=None, help="ball center (default: origin)")
    p.add_argument("vector", help="comma-separated entries, e.g. 3,4")
    return parser


def _project(args):
    u = parse_vector(args.vector, "vector")
    if args.simplex:
        out = project_simplex(u)
    else:
        center = parse_vector(args.center, "center") if args.center else None
        try:
            ball = FeasibleSet.ball(args.ball, center, dim=u.size)
        except ValueError as exc:
            raise ConfigError(str(exc), field="ball")
        if ball.dim != u.size:
            raise ConfigError(f"center has dimension {ball.dim}, vector {u.size}",
                              field="center")
        out = project_ball(u, ball)
    print(",".join(format_float(x) for x in out))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "project":
            _project(args)
        elif args.command == "run":
            run_experiment(load_spec(args.spec, args.output), args.jobs)
        else:
            spec = load_spec(args.spec, args.output)
            if spec.sweep_T is None or len(spec.sweep_T) < 3:
                raise ConfigError("a rate sweep needs at least 3 T values", field="sweep.T")
            rate_sweep(spec, args.jobs)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RunAborted as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
