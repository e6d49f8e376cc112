"""Command line entry point: ``bitround <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .generators import CflpRecipe, GenerationError, KnapsackRecipe, generate_cflp, generate_knapsack, recipe_header
from .model import OPBError, read_opb, save_opb
from .rounding import round_objective
from .solvers import SolveBudget, certify_pair, solve
from .symmetry import detect_symmetry


def _run_length(bits) -> str:
    """``0x3 1x2 0x1`` style encoding of a bit vector."""
    if not bits:
        return ""
    out, cur, count = [], bits[0], 0
    for b in bits:
        if b == cur:
            count += 1
        else:
            out.append(f"{cur}x{count}")
            cur, count = b, 1
    out.append(f"{cur}x{count}")
    return " ".join(out)


def _weights(text):
    lo, _, hi = text.partition(":")
    return int(lo), int(hi)


def cmd_generate(args):
    if args.family == "cflp":
        recipe = CflpRecipe(
            n=args.n, m=args.m, square_scale=args.square_scale, circle_scale=args.circle_scale,
            decimals=args.decimals, seed=args.seed,
            fixed_cost_range=_weights(args.fixed_costs) if args.fixed_costs else None,
        )
        bp = generate_cflp(recipe)
    else:
        lo, hi = _weights(args.weights)
        recipe = KnapsackRecipe(
            n=args.n, k=args.k, noise_sigma=args.sigma, weight_low=lo, weight_high=hi,
            balanced=not args.random_sizes, seed=args.seed,
        )
        bp = generate_knapsack(recipe)
    save_opb(bp, args.output, recipe_header(recipe))
    return 0


def cmd_round(args):
    bp = read_opb(args.input)
    rounded, report = round_objective(bp, args.level)
    save_opb(rounded, args.output, [f"rounded: level={args.level}"])
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_json(), indent=2) + "\n")
    return 0


def cmd_symmetry(args):
    bp = read_opb(args.input)
    report = detect_symmetry(bp, args.budget)
    data = report.to_json()
    if args.json:
        Path(args.json).write_text(json.dumps(data, indent=2) + "\n")
    print(f"generators: {report.generator_count}")
    print(f"orbits: {data['orbit_sizes']}")
    print(f"search_nodes: {report.search_nodes}")
    print(f"timed_out: {str(report.timed_out).lower()}")
    return 0


def cmd_solve(args):
    bp = read_opb(args.input)
    result = solve(bp, SolveBudget(max_nodes=args.budget_nodes))
    print(f"status: {result.status.value}")
    print(f"value: {'' if result.best_value is None else result.best_value}")
    print(f"assignment: {_run_length(result.best_assignment or ())}")
    print(f"nodes: {result.nodes_explored}")
    return 0


def cmd_certify(args):
    bp = read_opb(args.input)
    report = certify_pair(bp, args.level, SolveBudget(max_nodes=args.budget_nodes))
    print(json.dumps(report.to_json(), indent=2))
    return 2 if report.traditional_ok is False else 0


def cmd_experiment(args):
    try:
        cfg = harness.load_config_file(args.config)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    out = args.output or cfg.output or str(Path(args.config).with_suffix(""))
    records, rows = harness.run_experiment(cfg)
    harness.write_outputs(cfg, records, rows, out)
    print(harness.emit_report(rows, records, "markdown"), end="")
    if harness.bound_violations(records):
        print("loss bound violated", file=sys.stderr)
        return 2
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bitround", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a generated instance as OPB")
    fam = g.add_subparsers(dest="family", required=True)
    c = fam.add_parser("cflp")
    c.add_argument("--n", type=int, required=True, help="facilities")
    c.add_argument("--m", type=int, required=True, help="customers")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--decimals", type=int, default=2)
    c.add_argument("--square-scale", type=float, default=1.0)
    c.add_argument("--circle-scale", type=float, default=4.0)
    c.add_argument("--fixed-costs", metavar="LO:HI")
    c.add_argument("-o", "--output", required=True)
    k = fam.add_parser("knapsack")
    k.add_argument("--n", type=int, required=True, help="items")
    k.add_argument("--k", type=int, required=True, help="clusters")
    sizes = k.add_mutually_exclusive_group()
    sizes.add_argument("--balanced", action="store_true", default=True)
    sizes.add_argument("--random-sizes", action="store_true")
    k.add_argument("--weights", default="50:500", metavar="LO:HI")
    k.add_argument("--sigma", type=int, default=2**12)
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("round", help="round objective coefficients to L bits")
    r.add_argument("--level", type=int, required=True)
    r.add_argument("input")
    r.add_argument("output")
    r.add_argument("--report")
    r.set_defaults(func=cmd_round)

    s = sub.add_parser("symmetry", help="detect formulation symmetries")
    s.add_argument("input")
    s.add_argument("--budget", type=int, default=10**6)
    s.add_argument("--json")
    s.set_defaults(func=cmd_symmetry)

    v = sub.add_parser("solve", help="solve exactly")
    v.add_argument("input")
    v.add_argument("--budget-nodes", type=int, default=10**7)
    v.set_defaults(func=cmd_solve)

    ce = sub.add_parser("certify", help="compare the optimum with the L-bit rounded optimum")
    ce.add_argument("input")
    ce.add_argument("--level", type=int, required=True)
    ce.add_argument("--budget-nodes", type=int, default=10**7)
    ce.set_defaults(func=cmd_certify)

    e = sub.add_parser("experiment", help="run a level sweep from a JSON config")
    e.add_argument("--config", required=True)
    e.add_argument("-o", "--output", help="output directory")
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (OPBError, GenerationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
