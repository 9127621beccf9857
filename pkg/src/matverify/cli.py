"""Command-line entry point.

Exit codes: 0 accepted / success, 1 rejected, 2 usage, I/O or shape error,
3 injected fault was neutral.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .analysis import FAULT_FAMILIES, ExperimentConfig, magnitude_sweep, run_experiment, theorem2_bound
from .exceptions import MatverifyError
from .faults import apply_fault, delta_of, parse_fault
from .fixtures import FIXTURES
from .matrix import FMA, SEPARATE, TolerancePolicy
from .sampling import DEFAULT_SEED, SeededStream
from .textio import format_matrix, read_matrix, write_matrix
from .verifiers import METHODS, chain_verify, reference_tolerance, verify

EXIT_ACCEPT = 0
EXIT_REJECT = 1
EXIT_ERROR = 2
EXIT_NEUTRAL = 3

_HA_CAVEAT = (
    "note: checksum verification is blind to faults that preserve every row and "
    "column sum (row or column swaps, for example); acceptance here is not proof"
)


class UsageError(Exception):
    pass


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits, got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _shape(text: str):
    parts = [int(p) for p in text.split(",")]
    if len(parts) != 3 or min(parts) < 1:
        raise argparse.ArgumentTypeError(f"shape must be m,p,n with positive entries, got {text}")
    return tuple(parts)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="matverify", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, with_k=True):
        p.add_argument("--seed", type=_u64, default=DEFAULT_SEED, help="64-bit seed (default 0xC0FFEE)")
        p.add_argument("--tolerance", default="auto", help="'auto' or an absolute threshold")
        p.add_argument("--fma", action="store_true", help="accumulate with fused multiply-add")
        p.add_argument("--output", choices=("text", "json"), default="text")
        if with_k:
            p.add_argument("--k", type=_positive_int, default=1, help="iterations")

    v = sub.add_parser("verify", help="verify a claimed product")
    v.add_argument("--method", choices=METHODS, default="gvfa")
    v.add_argument("--a", help="left factor file")
    v.add_argument("--b", help="right factor file")
    v.add_argument("--c", help="claimed product file")
    v.add_argument("--chain", nargs="+", metavar="FILE", help="factor files M1 .. MN (with --method chain)")
    v.add_argument("--fixture", choices=sorted(FIXTURES), help="use a built-in A and B (and C unless --c)")
    common(v)

    i = sub.add_parser("inject", help="inject a fault into a matrix file")
    i.add_argument("--c", required=True, help="matrix file to corrupt")
    i.add_argument("--fault", required=True, help="fault grammar, e.g. colswap:0,1")
    i.add_argument("--out", help="output file (default: stdout)")
    i.add_argument("--output", choices=("text", "json"), default="text")

    e = sub.add_parser("experiment", help="Monte Carlo false-positive experiment")
    e.add_argument("--method", choices=METHODS, default="gvfa")
    e.add_argument("--fault", help=f"fault grammar or family ({', '.join(FAULT_FAMILIES)})")
    e.add_argument("--delta", type=float, default=1.0, help="magnitude for fault families")
    e.add_argument("--delta-scale", choices=("absolute", "tolerance"), default="absolute")
    e.add_argument("--sweep", help="comma-separated magnitudes; runs one experiment per value")
    shape = e.add_mutually_exclusive_group()
    shape.add_argument("--n", type=_positive_int, help="square size")
    shape.add_argument("--shape", type=_shape, help="m,p,n")
    shape.add_argument("--fixture", choices=sorted(FIXTURES))
    e.add_argument("--matrix-source", choices=("uniform", "graded"), default="uniform")
    e.add_argument("--fixed-matrices", action="store_true", help="draw A and B once for all trials")
    e.add_argument("--trials", type=int, default=1000)
    e.add_argument("--chain-length", type=int, default=2)
    common(e)

    bnd = sub.add_parser("bound", help="false-positive bound for an error matrix")
    bnd.add_argument("--delta-file", help="error matrix file")
    bnd.add_argument("--a")
    bnd.add_argument("--b")
    bnd.add_argument("--c")
    bnd.add_argument("--epsilon", default="auto", help="threshold; 'auto' uses the largest tolerance (needs A, B, C)")
    bnd.add_argument("--k", type=_positive_int, default=1)
    bnd.add_argument("--seed", type=_u64, default=DEFAULT_SEED)
    bnd.add_argument("--tolerance", default="auto")
    return parser


def _emit(payload: dict, text_lines, output: str) -> None:
    if output == "json":
        print(json.dumps(payload, indent=2))
    else:
        for line in text_lines:
            print(line)


def cmd_verify(args) -> int:
    policy = TolerancePolicy.parse(args.tolerance)
    mode = FMA if args.fma else SEPARATE
    stream = SeededStream(args.seed, 0)

    if args.chain:
        if args.a or args.b or args.fixture:
            raise UsageError("--chain cannot be combined with --a/--b/--fixture")
        if args.method != "chain":
            raise UsageError("--chain requires --method chain")
        if not args.c:
            raise UsageError("--c is required")
        factors = [read_matrix(p) for p in args.chain]
        c = read_matrix(args.c, allow_nonfinite=True)
        verdict, report = chain_verify(factors, c, args.k, stream, policy, mode), None
    else:
        if args.fixture:
            if args.a or args.b:
                raise UsageError("--fixture cannot be combined with --a/--b")
            a, b, c_fix, _ = FIXTURES[args.fixture]()
            c = read_matrix(args.c, allow_nonfinite=True) if args.c else c_fix
        else:
            if not (args.a and args.b and args.c):
                raise UsageError("verify needs --a, --b and --c (or --fixture, or --chain)")
            a, b = read_matrix(args.a), read_matrix(args.b)
            c = read_matrix(args.c, allow_nonfinite=True)
        verdict, report = verify(args.method, a, b, c, args.k, stream, policy, mode)

    payload = {"verdict": verdict.to_dict(), "seed": args.seed, "mode": mode.value}
    lines = [
        f"{'ACCEPTED' if verdict.accepted else 'REJECTED'} by {verdict.method} "
        f"after {verdict.iterations_run} iteration(s); max residual {verdict.max_residual:.6g}"
    ]
    if report is not None:
        payload["localization"] = report.to_dict()
        if report.implicated_cells:
            cells = ", ".join(f"({i},{j})" for i, j in sorted(report.implicated_cells))
            lines.append(f"implicated cells: {cells}")
    if verdict.method == "huang-abraham" and verdict.accepted:
        payload["caveat"] = _HA_CAVEAT
        lines.append(_HA_CAVEAT)
    _emit(payload, lines, args.output)
    return EXIT_ACCEPT if verdict.accepted else EXIT_REJECT


def cmd_inject(args) -> int:
    spec = parse_fault(args.fault)
    c = read_matrix(args.c, allow_nonfinite=True)
    faulted, neutral = apply_fault(c, spec)
    if args.out:
        write_matrix(args.out, faulted)
    else:
        sys.stdout.write(format_matrix(faulted))
    finite = faulted.is_finite()
    if args.output == "json":
        print(json.dumps({"fault": spec.to_grammar(), "neutral": neutral, "finite": finite}), file=sys.stderr if not args.out else sys.stdout)
    else:
        print(f"neutral: {str(neutral).lower()}", file=sys.stderr if not args.out else sys.stdout)
        if not finite:
            print("warning: injected fault produced a non-finite entry", file=sys.stderr)
    return EXIT_NEUTRAL if neutral else EXIT_ACCEPT


def cmd_experiment(args) -> int:
    if args.trials < 1:
        raise UsageError(f"--trials must be at least 1, got {args.trials}")
    if args.fixture:
        source, shape = args.fixture, (2, 2, 2)
    else:
        source = args.matrix_source
        shape = args.shape or (args.n or 8,) * 3
    config = ExperimentConfig(
        method=args.method,
        shape=shape,
        fault=args.fault,
        delta=args.delta,
        delta_scale=args.delta_scale,
        k=args.k,
        trials=args.trials,
        seed=args.seed,
        policy=TolerancePolicy.parse(args.tolerance),
        mode=FMA if args.fma else SEPARATE,
        matrix_source=source,
        resample_matrices=not args.fixed_matrices,
        chain_length=args.chain_length,
    )
    if args.sweep:
        deltas = [float(d) for d in args.sweep.split(",")]
        print(json.dumps([r.to_dict() for r in magnitude_sweep(config, deltas)], indent=2))
    else:
        print(run_experiment(config).to_json(indent=2))
    return EXIT_ACCEPT


def cmd_bound(args) -> int:
    have_abc = args.a and args.b and args.c
    if args.delta_file and (args.a or args.b or args.c):
        raise UsageError("--delta-file cannot be combined with --a/--b/--c")
    if args.delta_file:
        delta = read_matrix(args.delta_file, allow_nonfinite=True)
    elif have_abc:
        a, b = read_matrix(args.a), read_matrix(args.b)
        c = read_matrix(args.c, allow_nonfinite=True)
        delta = delta_of(a, b, c)
    else:
        raise UsageError("bound needs --delta-file or all of --a, --b, --c")

    if args.epsilon == "auto":
        if not have_abc:
            raise UsageError("--epsilon auto needs --a, --b and --c")
        eps = reference_tolerance("gvfa", a, b, c, SeededStream(args.seed, 0), TolerancePolicy.parse(args.tolerance))
    else:
        eps = float(args.epsilon)
    report = theorem2_bound(delta, eps, args.k)
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_ACCEPT


COMMANDS = {"verify": cmd_verify, "inject": cmd_inject, "experiment": cmd_experiment, "bound": cmd_bound}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_ACCEPT
    try:
        return COMMANDS[args.subcommand](args)
    except (UsageError, MatverifyError, OSError, ValueError) as exc:
        print(f"matverify {args.subcommand}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
