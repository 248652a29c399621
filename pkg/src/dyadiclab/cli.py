"""Command line entry point: dyadiclab <subcommand> [options]."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import normlab as nl
from .haar import Mesh
from .operators import CLASSES, SHIFT, random_admissible_spec
from .scalar import EXACT, FLOAT, to_float
from .spaces import ExponentTriple


def _common(p: argparse.ArgumentParser):
    p.add_argument("--depth", type=int, default=3, help="grid depth N (cells per unit length 2^N)")
    p.add_argument("--dims", type=int, nargs=2, default=(1, 1), metavar=("n", "m"))
    p.add_argument("--backend", choices=(EXACT, FLOAT), default=FLOAT)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=30)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None, help="directory for report.csv and report.json")
    p.add_argument("--config", default=None, help="JSON config file")


def _triple(text: str) -> ExponentTriple:
    try:
        p, q, r = (float(x) for x in text.split(","))
        return ExponentTriple(p, q, r)
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"bad exponent triple {text!r}: {err}")


def _complexity(text: str) -> tuple:
    parts = [int(x) for x in text.split(",")]
    if len(parts) == 1:
        return (parts[0],) * 3
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("complexity is c or k1,k2,k3")
    return tuple(parts)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dyadiclab", description="Bilinear bi-parameter dyadic model operator lab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-identities", help="expansion and commutator identities on random data")
    _common(p)

    p = sub.add_parser("estimate-norm", help="empirical norm of [b,U]_1 for one random spec")
    _common(p)
    p.add_argument("--class", dest="cls", choices=CLASSES, default=SHIFT)
    p.add_argument("--pattern", default=None, help="e.g. cc0/cc0")
    p.add_argument("--k", type=_complexity, default=(0, 0, 0))
    p.add_argument("--v", type=_complexity, default=(0, 0, 0))
    p.add_argument("--triple", type=_triple, default=ExponentTriple(4, 4, 2))
    p.add_argument("--no-commutator", action="store_true")

    p = sub.add_parser("complexity-scan", help="norm growth of [b,S]_1 against complexity")
    _common(p)
    p.add_argument("--complexities", type=_complexity, nargs="+", default=[(0, 0, 0), (1, 1, 1)])
    p.add_argument("--triple", type=_triple, nargs="+", default=[ExponentTriple(4, 4, 2)])
    p.add_argument("--iterated", action="store_true")
    p.add_argument("--slope-limit", type=float, default=None)

    p = sub.add_parser("rwt", help="restricted weak type exceptional-set experiment")
    _common(p)
    p.add_argument("--triple", type=_triple, nargs="+",
                   default=[ExponentTriple(3, 3, 1.5), ExponentTriple(1.5, 1.5, 0.75)])
    p.add_argument("--seeds", type=int, default=2)

    p = sub.add_parser("banach-suite", help="all classes and patterns in the Banach range")
    _common(p)
    p.add_argument("--triple", type=_triple, nargs="+", default=[ExponentTriple(3, 3, 1.5)])

    p = sub.add_parser("run", help="config-driven suite")
    _common(p)
    return parser


def _finish(report: nl.ExperimentReport, args) -> int:
    report.environment = nl.environment()
    report.config = {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(args).items()
                     if isinstance(v, (int, float, str, tuple, list, type(None)))}
    if args.out:
        report.write(args.out)
    summary = {"passed": report.passed, "rows": len(report.rows), "aggregates": report.aggregates}
    print(json.dumps(summary, indent=2, default=nl._jsonable))
    return 0 if report.passed else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    n, m = args.dims
    N = args.depth
    if args.command == "run" or args.config:
        if not args.config:
            print("run needs --config", file=sys.stderr)
            return 2
        code, report = nl.run_suite(args.config, args.out)
        if report is None:
            print("invalid config", file=sys.stderr)
        else:
            print(json.dumps({"passed": report.passed, "exit": code, "rows": len(report.rows)}))
        return code
    if args.command == "verify-identities":
        report = nl.identity_suite(N, range(args.seed, args.seed + args.trials), args.backend, n, m)
    elif args.command == "estimate-norm":
        mesh = Mesh(n, m, N, N)
        spec = random_admissible_spec(np.random.default_rng(args.seed), args.cls, args.k, args.v, args.pattern,
                                      n=n, m=m, N1=N, N2=N, backend=FLOAT)
        op = nl.model_batch(spec)
        if not args.no_commutator:
            b = nl.unit_bmo_symbol(mesh, np.random.default_rng([args.seed, 7]))
            op = nl.commutator_batch(op, to_float(b.values), 1)
        est = nl.estimate_operator_norm(op, args.triple, mesh, args.trials, args.seed)
        report = nl.ExperimentReport()
        t = args.triple
        report.rows.append(nl.Row("estimate_norm", spec.kind, str(spec.eff_pattern), spec.eff_k, spec.eff_v,
                                  t.p, t.q, t.r, N, args.seed, est.value))
        report.aggregates = {"norm": est.value, "argmax_trial": est.argmax, "argmax_kind": est.kind}
    elif args.command == "complexity-scan":
        report = nl.complexity_scan(N, args.complexities, args.triple, args.trials, args.seed,
                                    iterated=args.iterated, n=n, m=m, threads=args.threads,
                                    slope_limit=args.slope_limit)
    elif args.command == "rwt":
        report = nl.rwt_suite((N,), range(args.seed, args.seed + args.seeds), args.triple, args.trials,
                              containment_N=N)
    elif args.command == "banach-suite":
        report = nl.banach_range_suite(N, args.triple, args.trials, args.seed, n, m, threads=args.threads)
    else:  # pragma: no cover - argparse enforces the choices
        parser.error(f"unknown command {args.command}")
        return 2
    return _finish(report, args)


if __name__ == "__main__":
    sys.exit(main())
