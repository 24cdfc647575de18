"""Command-line front end.

Exit codes: 0 converged, 2 finished without meeting the tolerances (files are
still written), 1 usage or problem-file error, 3 divergence or infeasibility.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from . import io, oracle
from .errors import AccuracyError, DivergenceError, InfeasibleError, UnsupportedError
from .optimizer import solve
from .root import fisher_information_root

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_CONVERGED = 2
EXIT_FAILED = 3

PLOT_POINTS = 401
GRID_POINTS = 101
VERIFY_RTOL = 1e-8


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="smoothmix", description="Smoothest Gaussian mixture meeting a set of specifications.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    s = sub.add_parser("solve", help="solve a problem file")
    s.add_argument("problem", help="problem JSON file")
    s.add_argument("--out", help="solution JSON file (default: standard output)")
    s.add_argument("--plot", metavar="PREFIX", help="write PREFIX.csv with x, f(x) and weighted components (D=1)")
    s.add_argument("--plot-grid", metavar="PREFIX", help="write PREFIX.csv with a 101x101 x, y, f(x, y) grid (D=2)")
    s.add_argument("--verify", action="store_true", help="cross-check closed forms by quadrature")
    s.add_argument("--seed", type=int, help="override the random seed of the problem file")
    s.add_argument("--quiet", action="store_true", help="suppress the summary on standard error")
    c = sub.add_parser("check", help="re-evaluate the residuals of a solution file")
    c.add_argument("problem")
    c.add_argument("solution")
    return parser


def _fmt(v):
    return format(float(v), ".17g")


def write_plot(mix, path):
    """CSV of the density and its weighted components on the support box."""
    qs = oracle.QuadratureSpec.for_components(mix.means, mix.covs)
    x = np.linspace(qs.lo[0], qs.hi[0], PLOT_POINTS)
    comps = np.stack([w * g.pdf(x) for w, g in mix.components])
    header = ["x", "f"] + [f"w{i}_f{i}" for i in range(mix.n_components)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for k in range(x.size):
            row = [x[k], comps[:, k].sum()] + list(comps[:, k])
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_grid(mix, path):
    """CSV of ``f`` on a 101x101 grid over the support box."""
    qs = oracle.QuadratureSpec.for_components(mix.means, mix.covs)
    xs = np.linspace(qs.lo[0], qs.hi[0], GRID_POINTS)
    ys = np.linspace(qs.lo[1], qs.hi[1], GRID_POINTS)
    pts = np.stack(np.meshgrid(xs, ys, indexing="ij"), -1).reshape(-1, 2)
    vals = mix.pdf(pts)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("x,y,f\n")
        for p, v in zip(pts, vals):
            fh.write(f"{_fmt(p[0])},{_fmt(p[1])},{_fmt(v)}\n")


def verification_report(rm, mix):
    """Quadrature cross-checks of the closed-form quantities."""
    closed = fisher_information_root(rm)
    try:
        fi_root = oracle.fi_root_quadrature(rm)
        fi_mix = oracle.fi_mixture_quadrature(mix)
        mass = oracle.mass_quadrature(mix)
        mean = oracle.mean_quadrature(mix)
        cov = oracle.covariance_quadrature(mix)
    except (UnsupportedError, AccuracyError) as exc:
        return {"performed": False, "reason": str(exc)}
    rel = max(abs(fi_root - closed), abs(fi_mix - closed)) / abs(closed)
    mom = max(float(np.max(np.abs(mean - mix.mean()))), float(np.max(np.abs(cov - mix.covariance()))))
    return {
        "performed": True,
        "fisher_closed_form": closed,
        "fisher_root_quadrature": fi_root,
        "fisher_mixture_quadrature": fi_mix,
        "fisher_relative_difference": rel,
        "mass_quadrature": mass,
        "moment_difference": mom,
        "entropy_quadrature": oracle.entropy_quadrature(mix) if mix.dim == 1 else None,
        "passed": bool(rel <= VERIFY_RTOL and abs(mass - 1.0) <= VERIFY_RTOL and mom <= VERIFY_RTOL),
    }


def _emit(args, problem, solution, verification):
    doc = io.solution_to_dict(solution, problem, verification)
    if args.out:
        io.write_json(doc, args.out)
    else:
        sys.stdout.write(io.dumps(doc))
    if args.plot:
        write_plot(solution.mixture, args.plot + ".csv")
    if args.plot_grid:
        write_grid(solution.mixture, args.plot_grid + ".csv")


def _say(args, msg):
    if not args.quiet:
        print(msg, file=sys.stderr)


def run_solve(args):
    try:
        problem = io.load_problem(args.problem)
    except (OSError, io.SchemaError) as exc:
        print(f"smoothmix: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.seed is not None:
        problem.options = dataclasses.replace(problem.options, seed=args.seed)
    if args.plot and problem.dim != 1:
        print("smoothmix: --plot needs a one-dimensional problem; use --plot-grid for D=2", file=sys.stderr)
        return EXIT_USAGE
    if args.plot_grid and problem.dim != 2:
        print("smoothmix: --plot-grid needs a two-dimensional problem", file=sys.stderr)
        return EXIT_USAGE
    try:
        solution = solve(problem)
    except DivergenceError as exc:
        print(f"smoothmix: divergence: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except InfeasibleError as exc:
        print(f"smoothmix: infeasible: {exc}", file=sys.stderr)
        if exc.solution is not None:
            _emit(args, problem, exc.solution, None)
        return EXIT_FAILED
    verification = verification_report(solution.root_mixture, solution.mixture) if args.verify else None
    _emit(args, problem, solution, verification)
    _say(args, f"fisher information {solution.fisher_information:.12g}, "
               f"max violation {solution.max_violation:.3g}, "
               f"{'converged' if solution.converged else 'NOT converged'} (start {solution.start_index})")
    if solution.bound_hits:
        _say(args, f"warning: parameters on the box ({', '.join(solution.bound_hits)}); "
                   "the infimum may not be attained inside it")
    if verification is not None:
        _say(args, f"verification {'passed' if verification.get('passed') else 'FAILED'}")
    return EXIT_OK if solution.converged else EXIT_NOT_CONVERGED


def run_check(args):
    try:
        problem = io.load_problem(args.problem)
        with open(args.solution, encoding="utf-8") as fh:
            doc = json.load(fh)
        _, diff = io.recheck_residuals(doc, problem)
    except (OSError, ValueError, KeyError) as exc:
        print(f"smoothmix: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"largest residual difference {diff:.3g}")
    return EXIT_OK if diff <= 1e-12 else EXIT_NOT_CONVERGED


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "solve":
        return run_solve(args)
    return run_check(args)
