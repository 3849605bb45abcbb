"""Command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .baseline import solve_deterministic_enumerate, solve_deterministic_milp
from .bnb import BnbConfig, spatial_bnb
from .experiments import (
    DEFAULT_GAMMAS,
    FactorModel,
    StudyConfig,
    make_instance,
    out_of_sample_cvar,
    run_study,
)
from .graph import river_crossing
from .io import Instance, dump_json, load_instance, load_json, save_instance, strategy_from_dict
from .risk import (
    BudgetedAmbiguitySet,
    RandomizedStrategy,
    dominance_check,
    loizou_objective,
    worst_case_cvar,
)


def _override(inst: Instance, args) -> Instance:
    if args.gamma is not None:
        inst = inst.with_gamma(args.gamma)
    if args.alpha is not None or args.budget is not None:
        inst = Instance(
            inst.net, inst.scenarios,
            inst.budget if args.budget is None else args.budget,
            inst.alpha if args.alpha is None else args.alpha,
            inst.amb, inst.extra,
        )
    return inst


def _emit(doc: dict, out) -> None:
    if out:
        dump_json(doc, out)
    print(json.dumps(doc, indent=1))


def cmd_generate(args) -> int:
    inst = make_instance(args.rows, args.cols, args.scenarios, args.budget, args.alpha,
                         args.gamma, args.seed, args.sample_seed)
    save_instance(inst, args.output)
    print(f"wrote {args.output}: {inst.net.arc_count} arcs, {inst.amb.size} scenarios")
    return 0


def cmd_solve(args) -> int:
    inst = _override(load_instance(args.instance), args)
    config = BnbConfig(time_limit=args.time_limit, pricing=args.pricing)
    res = spatial_bnb(inst.net, inst.scenarios, inst.amb, inst.alpha, inst.budget, args.eps, config)
    _emit(res.to_dict(), args.output)
    return 0


def cmd_solve_det(args) -> int:
    inst = _override(load_instance(args.instance), args)
    solve = solve_deterministic_milp if args.method == "milp" else solve_deterministic_enumerate
    res = solve(inst.net, inst.scenarios, inst.amb, inst.alpha, inst.budget)
    _emit(res.to_dict(), args.output)
    return 0


def cmd_evaluate(args) -> int:
    inst = load_instance(args.instance)
    if args.factor_model:
        fm = FactorModel.from_dict(load_json(args.factor_model))
    elif "factor_model" in inst.extra:
        fm = FactorModel.from_dict(inst.extra["factor_model"])
    else:
        print("the instance carries no factor model; pass --factor-model", file=sys.stderr)
        return 2
    strategy = strategy_from_dict(load_json(args.strategy))
    alpha = inst.alpha if args.alpha is None else args.alpha
    value = out_of_sample_cvar(inst.net, fm, strategy, alpha, args.mc_count, args.seed)
    _emit({"cvar": value, "alpha": alpha, "mc_count": args.mc_count, "seed": args.seed},
          args.output)
    return 0


def cmd_study(args) -> int:
    config = StudyConfig(
        network=args.network, rows=args.rows, cols=args.cols,
        scenario_count=args.scenarios, budget=args.budget, alpha=args.alpha,
        gammas=tuple(args.gammas), instances=args.instances, seed=args.seed,
        mc_count=args.mc_count, eps=args.eps, reuse_samples=args.reuse_samples,
        time_limit=args.time_limit,
    )
    report = run_study(config)
    dump_json(report.to_dict(), args.output)
    if args.csv:
        report.write_csv(args.csv)
    for row in report.summary:
        print(json.dumps(row))
    return 0


def cmd_example1(args) -> int:
    net, scenarios = river_crossing(args.tau, args.epsilon, args.delta)
    amb = BudgetedAmbiguitySet(np.full(4, 0.25), np.full(4, 0.25), 2.0)
    alpha = 0.5
    u_l = RandomizedStrategy(((0, 2), (1, 2)), np.array([0.5, 0.5]))
    u_sd = RandomizedStrategy.point_mass((0, 1))
    g_sd_l, _ = worst_case_cvar(net, scenarios, amb, u_l, alpha)
    g_sd_sd, _ = worst_case_cvar(net, scenarios, amb, u_sd, alpha)
    print(f"g_SD(u_L)  = {g_sd_l:.6f}")
    print(f"g_SD(u_SD) = {g_sd_sd:.6f}")
    print(f"g_L(u_L)   = {loizou_objective(net, scenarios, amb, u_l, alpha):.6f}")
    print(f"g_L(u_SD)  = {loizou_objective(net, scenarios, amb, u_sd, alpha):.6f}")
    # judged at the reference distribution, which every reading of the example allows
    verdict = dominance_check(net, scenarios, amb.q_hat, u_sd, u_l)
    print(f"dominance (u_SD vs u_L) at q_hat: {verdict.value}")
    res = spatial_bnb(net, scenarios, amb, alpha, 2, 1e-4)
    print(f"optimal value {res.value:.6f} with strategy {res.strategy.to_dict()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drni", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="grid instance with factor-model scenarios")
    p.add_argument("output")
    p.add_argument("--rows", type=int, default=4)
    p.add_argument("--cols", type=int, default=2)
    p.add_argument("--scenarios", type=int, default=20)
    p.add_argument("--budget", type=int, default=1)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-seed", type=int)
    p.set_defaults(func=cmd_generate)

    def overrides(p):
        p.add_argument("instance")
        p.add_argument("-o", "--output")
        p.add_argument("--gamma", type=float)
        p.add_argument("--alpha", type=float)
        p.add_argument("--budget", type=int)

    p = sub.add_parser("solve", help="optimal randomized strategy")
    overrides(p)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--time-limit", type=float)
    p.add_argument("--pricing", choices=("auto", "milp", "enumerate"), default="auto")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("solve-det", help="optimal deterministic plan")
    overrides(p)
    p.add_argument("--method", choices=("milp", "enumerate"), default="milp")
    p.set_defaults(func=cmd_solve_det)

    p = sub.add_parser("evaluate", help="out-of-sample CVaR of a strategy")
    p.add_argument("instance")
    p.add_argument("strategy")
    p.add_argument("-o", "--output")
    p.add_argument("--factor-model")
    p.add_argument("--alpha", type=float)
    p.add_argument("--mc-count", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("study", help="randomized vs deterministic study")
    p.add_argument("output")
    p.add_argument("--csv")
    p.add_argument("--network", choices=("reference", "grid"), default="reference")
    p.add_argument("--rows", type=int, default=4)
    p.add_argument("--cols", type=int, default=2)
    p.add_argument("--scenarios", type=int, default=20)
    p.add_argument("--budget", type=int, default=1)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--gammas", type=float, nargs="+", default=list(DEFAULT_GAMMAS))
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mc-count", type=int, default=10_000)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--time-limit", type=float)
    p.add_argument("--reuse-samples", action="store_true")
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("example1", help="the river-crossing example")
    p.add_argument("--tau", type=float, default=3.0)
    p.add_argument("--epsilon", type=float, default=2.5)
    p.add_argument("--delta", type=float, default=1.5)
    p.set_defaults(func=cmd_example1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
