"""Command-line interface: ``ahncut {validate,eval,solve,gen,compare}``.

Exit codes: 0 success, 1 domain failure (violation or solver error),
2 usage or parse error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import GeneratorSpec, compare, generate
from .energy import (
    Labeling,
    check_eq24_form,
    check_hierarchical_consistency,
    check_metric,
    edge_cost,
    eval_higher_order,
    eval_joint,
)
from .errors import AHNError, OracleInfeasible, ParameterError, ParseError
from .moves import ALGORITHMS, format_trace, solve
from .netfile import format_labeling, format_network, parse_labeling, read_network, read_text
from .oracle import brute_force_map

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def num(x) -> str:
    return f"{x:.9g}"


def _load(path):
    try:
        return read_network(path)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from exc


def _write(path, text):
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def cmd_validate(args) -> int:
    net = _load(args.network)
    ok = True
    form = check_eq24_form(net)
    print(f"eq24_form: {'pass' if form else 'FAIL'}")
    ok &= form
    labels = np.arange(net.free + 1)
    metric = all(check_metric(edge_cost(labels[:, None], labels[None, :], w, net.free), args.atol)
                 for w in np.unique(np.concatenate([net.edge_w, net.link_w, [0.0]])))
    print(f"metric: {'pass' if metric else 'FAIL'}")
    ok &= metric
    report = check_hierarchical_consistency(net)
    bad = report.violations
    print(f"consistency: {'pass' if not bad else 'FAIL'} ({len(report.rows)} auxiliary variables, "
          f"{len(bad)} violations)")
    for r in bad:
        print(f"violation: level {r.level} var {r.var} label {r.worst_label}: "
              f"lhs={num(r.lhs)} rhs={num(r.rhs)}")
    ok &= not bad
    return EXIT_OK if ok else EXIT_FAIL


def cmd_eval(args) -> int:
    net = _load(args.network)
    rows = parse_labeling(net, read_text(args.labeling))
    if not rows:
        raise ParseError("empty labeling file")
    if len(rows) == net.num_levels:
        print(f"joint={num(eval_joint(net, Labeling(tuple(rows))))}")
    elif len(rows) != 1:
        raise ParseError(f"labeling must give the base level or all {net.num_levels} levels")
    try:
        e, _ = eval_higher_order(net, rows[0])
    except OracleInfeasible as exc:
        print(f"higher_order=unavailable ({exc})")
        return EXIT_FAIL
    print(f"higher_order={num(e)}")
    return EXIT_OK


def cmd_solve(args) -> int:
    net = _load(args.network)
    if args.algorithm == "brute":
        lab, e = brute_force_map(net)
        labeling, summary = lab, f"final_joint={num(e)} final_higher_order={num(e)} sweeps=0"
        trace_text = format_trace((), net)
    else:
        r = solve(net, args.algorithm, max_iters=args.max_iters, seed=args.seed, init=args.init)
        labeling = r.labeling
        summary = (f"final_joint={num(r.energy)} final_higher_order={num(r.higher_order_energy)} "
                   f"sweeps={r.sweeps}")
        if not r.higher_order_exact:
            summary += " higher_order=approximate"
        trace_text = format_trace(r.trace, net, timing=args.timing)
    if args.out:
        _write(args.out, format_labeling(net, labeling))
    if args.trace:
        _write(args.trace, trace_text)
    print(summary)
    return EXIT_OK


def cmd_gen(args) -> int:
    try:
        spec = GeneratorSpec.from_text(read_text(args.spec))
    except OSError as exc:
        raise ParseError(f"cannot read {args.spec}: {exc.strerror}") from exc
    except AHNError as exc:
        raise ParseError(str(exc)) from exc
    net = generate(spec)
    _write(args.out, format_network(net))
    return EXIT_OK


def cmd_compare(args) -> int:
    files = sorted(p for p in Path(args.corpus).iterdir() if p.suffix == ".ahn")
    if not files:
        raise ParseError(f"no .ahn files in {args.corpus}")
    nets = [_load(p) for p in files]
    algorithms = args.algorithm or ["expansion", "swap", "range-expansion", "range-swap", "icm"]
    report = compare(nets, algorithms, max_iters=args.max_iters, seed=args.seed, init=args.init,
                     tol=args.atol)
    table = report.to_table(timing=args.timing)
    sys.stdout.write(table)
    if args.out:
        _write(args.out + ".csv", report.to_csv(timing=args.timing))
        _write(args.out + ".txt", table)
    if all(s.failures == report.instances for s in report.stats):
        return EXIT_FAIL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ahncut", description="Graph-cut inference for associative hierarchical networks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def solver_opts(sp):
        sp.add_argument("--max-iters", type=int, default=500, help="sweep cap (default 500)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--init", default="argmin", help="argmin | uniform:<l> | random")

    sp = sub.add_parser("validate", help="check metricity, edge form and hierarchical consistency")
    sp.add_argument("network")
    sp.add_argument("--atol", type=float, default=1e-9)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("eval", help="joint and higher-order energy of a labeling")
    sp.add_argument("network")
    sp.add_argument("labeling")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("solve", help="minimise a network")
    sp.add_argument("network")
    sp.add_argument("--algorithm", choices=ALGORITHMS + ("brute",), default="range-expansion")
    solver_opts(sp)
    sp.add_argument("--trace", help="write the per-step trace CSV here")
    sp.add_argument("--out", help="write the final labeling here ('-' for stdout)")
    sp.add_argument("--timing", action="store_true", help="record wall time in the trace (breaks byte-identical output)")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("gen", help="generate a network from a key=value spec file")
    sp.add_argument("spec")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("compare", help="compare algorithms over a directory of .ahn files")
    sp.add_argument("corpus")
    sp.add_argument("--algorithm", action="append", choices=ALGORITHMS,
                    help="repeat to select several (default: all)")
    solver_opts(sp)
    sp.add_argument("--atol", type=float, default=1e-9)
    sp.add_argument("--out", help="output prefix; writes <out>.csv and <out>.txt")
    sp.add_argument("--timing", action="store_true", help="report mean wall time (breaks byte-identical output)")
    sp.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "compare" and args.algorithm and len(set(args.algorithm)) < 2:
            parser.error("compare needs at least two distinct algorithms")
        if args.command == "solve" and args.algorithm == "brute" and args.init != "argmin":
            parser.error("--init cannot be combined with --algorithm brute")
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (ParseError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AHNError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
