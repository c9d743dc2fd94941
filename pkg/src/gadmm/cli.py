"""Command-line harness: solve single instances, sweep parameter grids,
emit performance-profile data, and generate instances.

Exit codes: 0 on success, 1 on usage errors, 2 on solve failures.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import bench, instances
from .dnnsdp import dual_objective, primal_objective, solve_dnnsdp
from .errors import GadmmError
from .solver import SolverConfig, Status

__all__ = ["main", "cli_main"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _load_problem(path: str, fmt: str, nonneg: bool = True):
    if fmt == "auto":
        if path.endswith(".dat-s"):
            fmt = "sdpa"
        elif path.endswith(".json"):
            fmt = "snapshot"
        else:
            fmt = "biq"
    if fmt == "sdpa":
        return instances.read_sdpa_sparse(path, nonneg_box=nonneg)
    if fmt == "snapshot":
        return instances.read_snapshot(path)
    if fmt == "biq":
        return instances.biq_to_dnnsdp(instances.read_biq_file(path))
    raise _UsageError(f"unknown format {fmt!r}")


def _config_from_args(args) -> SolverConfig:
    kwargs = dict(tol=args.tol, max_iter=args.max_iter, sigma=args.sigma)
    if getattr(args, "rho", None) is not None:
        kwargs["rho"] = args.rho
    if getattr(args, "tau", None) is not None:
        kwargs["tau"] = args.tau
    return SolverConfig(**kwargs)


def _add_common(parser):
    parser.add_argument("--sigma", type=float, default=1.0, help="penalty parameter")
    parser.add_argument("--tol", type=float, default=1e-6, help="residual tolerance")
    parser.add_argument("--max-iter", type=int, default=500_000, help="iteration cap")
    parser.add_argument("--alpha", type=float, default=None,
                        help="override the slack-constraint scaling")
    parser.add_argument("--seed", type=int, default=0, help="generator seed")
    parser.add_argument("--format", choices=["auto", "biq", "sdpa", "snapshot"],
                        default="auto", help="instance file format")


def _cmd_solve(args) -> int:
    problem = _load_problem(args.file, args.format)
    config = _config_from_args(args)
    it, res, report = solve_dnnsdp(problem, method=args.method, config=config,
                                   alpha=args.alpha)
    print(f"status      : {report.status.value}")
    print(f"iterations  : {report.iterations}")
    for name, val in res.as_dict().items():
        print(f"residual {name:>14s}: {val:.3e}")
    print(f"primal objective: {primal_objective(problem, it):.10g}")
    print(f"dual objective  : {dual_objective(problem, it):.10g}")
    if args.out:
        bench.write_report_json(
            [bench.RunRecord(args.file, args.method,
                             args.rho if args.method == "gadmm" else args.tau,
                             report.iterations, res.worst, 0.0, report.status.value,
                             residuals=res.as_dict(),
                             objective=primal_objective(problem, it))],
            args.out,
        )
    return 0 if report.status == Status.CONVERGED else 2


def _parse_grid(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise _UsageError(f"bad numeric list {text!r}") from None


def _cmd_sweep(args) -> int:
    cells = []
    for method in args.methods.split(","):
        method = method.strip()
        if method == "gadmm":
            cells.extend(("gadmm", r) for r in _parse_grid(args.rho))
        elif method == "spadmm":
            cells.extend(("spadmm", t) for t in _parse_grid(args.tau))
        else:
            raise _UsageError(f"sweep supports gadmm and spadmm, got {method!r}")
    base = SolverConfig(tol=args.tol, max_iter=args.max_iter, sigma=args.sigma)
    insts = [(p, (lambda path=p: _load_problem(path, args.format))) for p in args.file]
    records = bench.run_suite(insts, cells, base_config=base, alpha=args.alpha)
    bench.write_records_csv(records, args.out)
    failures = sum(1 for r in records if r.status != Status.CONVERGED.value)
    print(f"wrote {len(records)} records to {args.out} ({failures} non-converged)")
    return 0


def _cmd_profile(args) -> int:
    records = bench.read_records_csv(args.inp)
    curves = bench.performance_profile(records, metric=args.metric)
    if args.out:
        bench.write_profile_csv(curves, args.out)
        print(f"wrote {sum(len(c.thetas) for c in curves)} curve points to {args.out}")
    else:
        for curve in curves:
            for t, frac in zip(curve.thetas, curve.fractions):
                print(f"{curve.label},{t:g},{frac:g}")
    return 0


def _cmd_gen(args) -> int:
    if args.kind == "biq":
        data = instances.gen_random_biq(args.n_vars, args.seed, density=args.density)
        instances.write_biq_file(data, args.out)
    elif args.kind == "random-dnnsdp":
        problem, _ = instances.gen_random_dnnsdp(args.n, args.m_e, args.seed)
        instances.write_snapshot(problem, args.out)
    elif args.kind == "biq-snapshot":
        data = instances.gen_random_biq(args.n_vars, args.seed, density=args.density)
        problem = instances.biq_to_dnnsdp(data, with_inequalities=not args.no_cuts)
        instances.write_snapshot(problem, args.out)
    else:  # pragma: no cover - argparse restricts choices
        raise _UsageError(f"unknown kind {args.kind!r}")
    print(f"wrote {args.out}")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="gadmm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve one instance and print its residuals")
    p_solve.add_argument("--file", required=True)
    p_solve.add_argument("--method", choices=["gadmm", "spadmm", "scheme12"], default="gadmm")
    p_solve.add_argument("--rho", type=float, default=1.8)
    p_solve.add_argument("--tau", type=float, default=1.0)
    p_solve.add_argument("--out", default=None, help="write a JSON report here")
    _add_common(p_solve)
    p_solve.set_defaults(func=_cmd_solve)

    p_sweep = sub.add_parser("sweep", help="run a method/parameter grid and write records")
    p_sweep.add_argument("--file", nargs="+", required=True)
    p_sweep.add_argument("--methods", default="gadmm", help="comma list: gadmm,spadmm")
    p_sweep.add_argument("--rho", default="1.0,1.1,1.2,1.3,1.4,1.5,1.6,1.7,1.8,1.9",
                         help="comma list of relaxation factors")
    p_sweep.add_argument("--tau", default="1.0,1.618", help="comma list of step lengths")
    p_sweep.add_argument("--out", required=True)
    _add_common(p_sweep)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_prof = sub.add_parser("profile", help="turn records into performance-profile curves")
    p_prof.add_argument("--in", dest="inp", required=True)
    p_prof.add_argument("--metric", choices=["time", "iterations"], default="time")
    p_prof.add_argument("--out", default=None)
    p_prof.set_defaults(func=_cmd_profile)

    p_gen = sub.add_parser("gen", help="generate an instance file")
    p_gen.add_argument("--kind", choices=["biq", "random-dnnsdp", "biq-snapshot"],
                       default="biq")
    p_gen.add_argument("--n-vars", type=int, default=10)
    p_gen.add_argument("--n", type=int, default=6)
    p_gen.add_argument("--m-e", type=int, default=5)
    p_gen.add_argument("--density", type=float, default=1.0)
    p_gen.add_argument("--no-cuts", action="store_true")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=_cmd_gen)
    return parser


def cli_main(argv=None) -> int:
    """Entry point returning a process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except GadmmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:  # console-script shim
    sys.exit(cli_main())
