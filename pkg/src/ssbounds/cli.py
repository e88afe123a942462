"""Command-line entry point: simulate, bounds, channel, verify.

Exit codes: 0 ok, 1 usage, 2 validation, 3 invariant violation.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bounds as B
from .channels import (
    BinaryAsymmetricChannel,
    TernarySymmetricChannel,
    bac_capacity,
    ternary_capacity,
    z_channel_capacity,
)
from .simlab import run_experiment
from .tensorio import SchemaError, emit_report, load_config, read_tensor, write_levels, write_tensor

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_VIOLATION = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ssbounds", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run a synthetic sweep and write one tensor file per n")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="output directory")

    b = sub.add_parser("bounds", help="evaluate bounds on a tensor file")
    b.add_argument("--tensor", required=True)
    b.add_argument("--bounds", help="comma-separated bound names (default: all applicable)")
    b.add_argument("--gamma", type=float, default=0.5)
    b.add_argument("--lambda", dest="lam", type=float, default=0.5)
    b.add_argument("--optimize", action="store_true", help="optimize (C1, C2) per family (default)")
    b.add_argument("--C1", type=float)
    b.add_argument("--C2", type=float)
    b.add_argument("--k-max", type=int, default=12)
    b.add_argument("--format", choices=("csv", "json"), default="csv")
    b.add_argument("--levels-out", help="write per-level chained diagnostics here")
    b.add_argument("--out", required=True)

    c = sub.add_parser("channel", help="print a closed-form channel capacity in bits")
    csub = c.add_subparsers(dest="family", required=True, parser_class=_Parser)
    t = csub.add_parser("ternary")
    t.add_argument("--alpha", type=float, required=True)
    t.add_argument("--epsilon", type=float, default=0.0)
    a = csub.add_parser("bac")
    a.add_argument("--p", type=float, required=True)
    a.add_argument("--q", type=float, required=True)
    z = csub.add_parser("z")
    z.add_argument("--q", type=float, required=True)

    v = sub.add_parser("verify", help="run the exact empirical-law invariant suite")
    v.add_argument("--tensor", required=True)
    v.add_argument("--gamma", type=float, default=0.5)
    v.add_argument("--lambda", dest="lam", type=float, default=0.5)
    return p


def _simulate(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with_sur = cfg.surrogate_cap is not None
    for n, res in run_experiment(cfg, with_surrogate=with_sur).items():
        if with_sur:
            write_tensor(res[0], out / f"tensor_n{n}.json")
            write_tensor(res[1], out / f"surrogate_n{n}.json")
        else:
            write_tensor(res, out / f"tensor_n{n}.json")
        print(f"wrote n={n}")
    return EXIT_OK


def _bounds(args) -> int:
    if (args.C1 is None) != (args.C2 is None):
        raise UsageError("--C1 and --C2 must be given together")
    if args.optimize and args.C1 is not None:
        raise UsageError("--optimize conflicts with --C1/--C2")
    names = None
    if args.bounds:
        names = [x.strip() for x in args.bounds.split(",") if x.strip()]
        unknown = sorted(set(names) - set(B.BOUND_NAMES))
        if unknown:
            raise UsageError(f"unknown bound names: {', '.join(unknown)}")
    t = read_tensor(args.tensor)
    constants = None if args.C1 is None else (args.C1, args.C2)
    rep = B.compute_report(t, names, args.gamma, args.lam, constants, args.k_max)
    emit_report([rep], args.out, args.format)
    if args.levels_out:
        levels = {k[: -len("_levels")]: v for k, v in rep.diagnostics.items() if k.endswith("_levels")}
        write_levels(levels, args.levels_out)
    return EXIT_OK


def _channel(args) -> int:
    if args.family == "ternary":
        cap = ternary_capacity(TernarySymmetricChannel(args.alpha, args.epsilon))
    elif args.family == "bac":
        cap = bac_capacity(BinaryAsymmetricChannel(args.p, args.q))
    else:
        cap = z_channel_capacity(args.q)
    print(f"capacity_bits={cap.bits:.9g} optimal_p_u1={cap.optimal_input:.9g}")
    return EXIT_OK


def _verify(args) -> int:
    t = read_tensor(args.tensor)
    checks = B.invariant_checks(t, args.gamma, args.lam)
    failed = 0
    for c in checks:
        print(f"{'PASS' if c.ok else 'FAIL'} {c.name}: {c.detail}")
        failed += not c.ok
    return EXIT_VIOLATION if failed else EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handler = {"simulate": _simulate, "bounds": _bounds, "channel": _channel, "verify": _verify}[args.cmd]
    try:
        return handler(args)
    except UsageError as e:
        print(f"ssbounds: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (SchemaError, ValueError) as e:
        print(f"ssbounds: invalid input: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
