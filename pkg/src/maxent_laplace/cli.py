"""Command-line interface: moments, invert, sweep, verify.

Exit codes:
  0  success
  1  verify found a violated invariant
  2  invalid input (arguments, moment table, samples)
  3  infeasible moment problem
  4  no convergence (solver iterations or quadrature)
  5  file input/output error
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys

import numpy as np

from . import __version__
from .diagnostics import DEFAULT_S_MAX, density_table, sweep
from .errors import (Infeasible, MaxEntError, MaxIterations, NotNested, QuadratureError,
                     SolverError, ValidationError)
from .fileio import (FileFormatError, atomic_write, csv_text, json_text, moments_csv,
                     read_moment_columns, read_moments, read_samples)
from .problem import INVARIANTS, QuadratureSpec, validate_columns
from .solver import SolverConfig, solve
from .sources import (AlphaScheme, Exponential, Gamma, LogNormal, Mixture, SourceLaw,
                      empirical_problem, make_problem)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3
EXIT_NO_CONVERGENCE = 4
EXIT_IO = 5

SWEEP_HEADER = ("k", "entropy", "gap_from_prev", "l1_bound", "l1_direct", "l1_to_truth", "status")

# split a mixture on '+' only where the next term carries a weight ("w*law")
_MIX_SPLIT = re.compile(r"\+(?=[^+*]*\*)")


class UsageError(ValueError):
    pass


def _numbers(text, n, what):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"{what}: parameters must be numbers, got {text!r}") from None
    if len(vals) != n:
        raise UsageError(f"{what}: expected {n} parameter(s), got {len(vals)}")
    return vals


def parse_law(text: str) -> SourceLaw:
    """``exp:RATE``, ``gamma:SHAPE,RATE``, ``lognorm:MU,SIGMA`` or
    ``mix:W1*LAW1+W2*LAW2+...``."""
    text = text.strip()
    name, sep, args = text.partition(":")
    if not sep:
        raise UsageError(f"law {text!r} has no ':'")
    name = name.lower()
    try:
        if name == "exp":
            return Exponential(*_numbers(args, 1, "exp"))
        if name == "gamma":
            return Gamma(*_numbers(args, 2, "gamma"))
        if name == "lognorm":
            return LogNormal(*_numbers(args, 2, "lognorm"))
        if name == "mix":
            weights, comps = [], []
            for term in _MIX_SPLIT.split(args):
                w, star, law = term.partition("*")
                if not star:
                    raise UsageError(f"mixture term {term!r} is not of the form W*LAW")
                weights.append(_numbers(w, 1, "mixture weight")[0])
                comps.append(parse_law(law))
            total = math.fsum(weights)
            if abs(total - 1.0) > 1e-9:
                raise UsageError(f"mixture weights sum to {total!r}, not 1")
            return Mixture(tuple(w / total for w in weights), tuple(comps))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, UsageError):
            raise
        raise UsageError(f"law {text!r}: {exc}") from None
    raise UsageError(f"unknown law {name!r} (expected exp, gamma, lognorm or mix)")


def _int_list(text):
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def scheme_from_args(args, k=None) -> AlphaScheme:
    k = args.k if k is None else k
    if args.scheme == "explicit":
        if not args.alphas:
            raise UsageError("--scheme explicit needs --alphas")
        vals = _numbers(args.alphas, len(args.alphas.split(",")), "--alphas")
        return AlphaScheme.explicit(vals)
    if k is None:
        raise UsageError(f"--scheme {args.scheme} needs --k")
    if args.scheme == "scaled":
        return AlphaScheme.scaled(args.scale, k)
    return AlphaScheme.harmonic(k)


def solver_config(args) -> SolverConfig:
    base = SolverConfig()
    return SolverConfig(
        residual_tol=args.residual_tol if args.residual_tol is not None else base.residual_tol,
        max_iterations=args.max_iterations if args.max_iterations is not None else base.max_iterations,
        lambda_cap=args.lambda_cap if args.lambda_cap is not None else base.lambda_cap,
        min_margin=args.min_margin if args.min_margin is not None else base.min_margin,
        decrement_tol=args.decrement_tol if args.decrement_tol is not None else base.decrement_tol,
    )


def quad_spec(args) -> QuadratureSpec:
    base = QuadratureSpec()
    return QuadratureSpec(
        abs_tol=args.abs_tol if args.abs_tol is not None else base.abs_tol,
        rel_tol=args.rel_tol if args.rel_tol is not None else base.rel_tol,
        max_panels=args.max_panels if args.max_panels is not None else base.max_panels,
    )


def _emit(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        atomic_write(path, text)


def _config_doc(cfg: SolverConfig, q: QuadratureSpec) -> dict:
    return {
        "solver": {"residual_tol": cfg.residual_tol, "max_iterations": cfg.max_iterations,
                   "lambda_cap": cfg.lambda_cap, "min_margin": cfg.min_margin,
                   "decrement_tol": cfg.decrement_tol},
        "quadrature": {"abs_tol": q.abs_tol, "rel_tol": q.rel_tol, "max_panels": q.max_panels},
    }


def cmd_moments(args) -> int:
    scheme = scheme_from_args(args)
    q = quad_spec(args)
    if args.samples:
        p = empirical_problem(read_samples(args.samples), scheme, label=args.samples)
    elif args.draw:
        if not args.law:
            raise UsageError("--draw needs --law")
        rng = np.random.default_rng(args.seed)
        p = empirical_problem(parse_law(args.law).sample(args.draw, rng), scheme, label=args.law)
    elif args.law:
        p = make_problem(parse_law(args.law), scheme, q, label=args.law)
    else:
        raise UsageError("give one of --law, --samples, or --law with --draw")
    _emit(args.out, moments_csv(p))
    return EXIT_OK


def cmd_invert(args) -> int:
    p = read_moments(args.moments)
    cfg, q = solver_config(args), quad_spec(args)
    d, trace = solve(p, cfg, q)
    doc = {
        "command": "invert",
        "input": args.moments,
        "k": p.k,
        "alphas": p.alphas,
        "mus": p.mus,
        "lambdas": d.lambdas,
        "log_z": d.log_z,
        "entropy": d.entropy,
        "residual": d.residual,
        "iterations": d.iterations,
        "trace": trace.summary(),
        **_config_doc(cfg, q),
    }
    if args.density:
        table = density_table(d, "Y", n=args.grid)
        atomic_write(args.density, csv_text(("y", "f_y"), zip(table.grid, table.values)))
        doc["density_y"] = {"path": args.density, "points": args.grid}
    if args.density_s:
        table = density_table(d, "S", n=args.grid, s_max=args.s_max, q=q)
        atomic_write(args.density_s, csv_text(("s", "f_s"), zip(table.grid, table.values)))
        doc["density_s"] = {"path": args.density_s, "points": args.grid, "s_max": args.s_max,
                            "tail_mass": table.tail_mass}
    _emit(args.report, json_text(doc))
    return EXIT_OK


def _nan_or(x):
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else float(x)


def cmd_sweep(args) -> int:
    k_values = _int_list(args.k_values)
    cfg, q = solver_config(args), quad_spec(args)
    if args.law:
        source = parse_law(args.law)
        scheme = scheme_from_args(args, k=max(k_values))
    elif args.moments:
        source = read_moments(args.moments)
        scheme = None
    else:
        raise UsageError("sweep needs --law or --moments")
    report = sweep(source, scheme, k_values, cfg, q)

    rows = []
    for e in report.entries:
        pair = report.pair_into(e.k)
        rows.append((
            e.k, _nan_or(e.entropy),
            _nan_or(pair.gap) if pair else "",
            _nan_or(pair.l1_bound) if pair else "",
            _nan_or(pair.l1_direct) if pair else "",
            _nan_or(e.l1_to_truth), e.status,
        ))
    _emit(args.out, csv_text(SWEEP_HEADER, rows))
    if args.summary:
        doc = {
            "command": "sweep",
            "source": args.law or args.moments,
            "k_values": k_values,
            "truth_entropy": report.truth_entropy,
            "entries": [{"k": e.k, "status": e.status, "entropy": e.entropy,
                         "iterations": e.iterations, "l1_to_truth": e.l1_to_truth,
                         "lambdas": e.density.lambdas if e.density is not None else None,
                         "error": e.error} for e in report.entries],
            "pairs": [{"k_from": pr.k_from, "k_to": pr.k_to, "gap": pr.gap,
                       "l1_bound": pr.l1_bound, "l1_direct": pr.l1_direct,
                       "kl_direct": pr.kl_direct} for pr in report.pairs],
            **_config_doc(cfg, q),
        }
        atomic_write(args.summary, json_text(doc))
    if any(e.density is not None for e in report.entries):
        return EXIT_OK
    statuses = {e.status for e in report.entries}
    return EXIT_INFEASIBLE if statuses == {"Infeasible"} else EXIT_NO_CONVERGENCE


def cmd_verify(args) -> int:
    alphas, mus = read_moment_columns(args.moments)
    report = validate_columns(alphas, mus)
    failed = {}
    for v in report:
        failed.setdefault(v.invariant, []).append(v)
    for name in INVARIANTS:
        if name in failed:
            for v in failed[name]:
                idx = ",".join(str(i) for i in v.indices)
                print(f"FAIL {name} [{idx}] {v.message}")
        else:
            print(f"PASS {name}")
    if args.report:
        atomic_write(args.report, json_text({
            "command": "verify", "input": args.moments, "ok": report.ok,
            "violations": [v.as_dict() for v in report],
        }))
    return EXIT_OK if report.ok else EXIT_VIOLATION


def _add_scheme(p, k_required=False):
    p.add_argument("--scheme", choices=("harmonic", "scaled", "explicit"), default="harmonic",
                   help="exponent sequence: 1/n, C/n, or an explicit list (default harmonic)")
    p.add_argument("--k", type=int, required=k_required, help="number of exponents")
    p.add_argument("--scale", type=float, default=1.0, help="C for --scheme scaled")
    p.add_argument("--alphas", help="comma-separated exponents for --scheme explicit")


def _add_numerics(p):
    g = p.add_argument_group("numerical overrides")
    g.add_argument("--residual-tol", type=float)
    g.add_argument("--max-iterations", type=int)
    g.add_argument("--lambda-cap", type=float)
    g.add_argument("--min-margin", type=float)
    g.add_argument("--decrement-tol", type=float)
    g.add_argument("--abs-tol", type=float, help="quadrature absolute tolerance")
    g.add_argument("--rel-tol", type=float, help="quadrature relative tolerance")
    g.add_argument("--max-panels", type=int, help="quadrature panel budget")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maxent-laplace",
        description="Maximum entropy densities from real-axis Laplace transform values.",
        epilog=__doc__.split("\n", 1)[1],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("moments", help="write an alpha,mu moment table")
    p.add_argument("--law", help="exp:R | gamma:S,R | lognorm:M,S | mix:W*LAW+W*LAW...")
    p.add_argument("--samples", help="file of nonnegative samples of S, one per line")
    p.add_argument("--draw", type=int, help="draw N samples from --law and use their moments")
    p.add_argument("--seed", type=int, default=0, help="seed for --draw (default 0)")
    _add_scheme(p)
    _add_numerics(p)
    p.add_argument("--out", "-o", help="output CSV (default stdout)")
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("invert", help="solve a moment table for its maxent density")
    p.add_argument("moments", help="alpha,mu CSV")
    p.add_argument("--report", "-o", help="JSON report (default stdout)")
    p.add_argument("--density", help="write y,f_y table here")
    p.add_argument("--density-s", help="write s,f_s table here")
    p.add_argument("--grid", type=int, default=1001, help="points per density table")
    p.add_argument("--s-max", type=float, default=DEFAULT_S_MAX, help="end of the s grid")
    _add_numerics(p)
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("sweep", help="entropy-gap diagnostics over nested K")
    p.add_argument("--law", help="source law (enables l1_to_truth)")
    p.add_argument("--moments", help="alpha,mu CSV with at least max(k) rows")
    p.add_argument("--k-values", default="2,4,6,8", help="increasing K list (default 2,4,6,8)")
    _add_scheme(p)
    _add_numerics(p)
    p.add_argument("--out", "-o", help="output CSV (default stdout)")
    p.add_argument("--summary", help="JSON summary document")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="check the invariants of a moment table")
    p.add_argument("moments", help="alpha,mu CSV")
    p.add_argument("--report", help="JSON list of violations")
    p.set_defaults(func=cmd_verify)
    return parser


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, Infeasible):
        return EXIT_INFEASIBLE
    if isinstance(exc, (MaxIterations, SolverError, QuadratureError)):
        return EXIT_NO_CONVERGENCE
    if isinstance(exc, (ValidationError, FileFormatError, UsageError, NotNested,
                        MaxEntError, ValueError)):
        return EXIT_INVALID
    if isinstance(exc, OSError):
        return EXIT_IO
    raise exc


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (MaxEntError, ValueError, OSError) as exc:
        code = exit_code(exc)
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        report = getattr(exc, "report", None)
        if report is not None:
            err["violations"] = [v.as_dict() for v in report]
        sys.stderr.write(json.dumps(err) + "\n")
        return code


if __name__ == "__main__":
    sys.exit(main())
