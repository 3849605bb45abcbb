"""Global solver: spatial branch-and-bound over the CVaR threshold.

Every node is an interval of thresholds. Its lower bound comes from column
generation on the McCormick/RRLT relaxation, its upper bound from coordinate
descent on the support found by the relaxation.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .graph import ContractError, Network, Plan, as_plan, zeta_bar
from .lp import INF
from .master import ColumnPool, FlowTable, IntervalBox, column_generation
from .risk import (
    SUPPORT_TOL,
    BudgetedAmbiguitySet,
    RandomizedStrategy,
    check_alpha,
    fixed_threshold_optimum,
    worst_case_cvar_flows,
)

log = logging.getLogger(__name__)


@dataclass
class BnbConfig:
    max_nodes: int = 10_000
    time_limit: float | None = None
    pricing: str = "auto"
    max_columns: int = 500
    # number of sub-intervals per branching; 2 uses the skewed split rule
    split_count: int = 2
    min_width: float = 1e-9
    descent_eps: float = 1e-9
    descent_rounds: int = 100


@dataclass
class DescentResult:
    value: float
    zeta: float
    probs: np.ndarray
    rounds: int


def coordinate_descent(
    flows: np.ndarray,
    u0,
    box: IntervalBox,
    amb: BudgetedAmbiguitySet,
    alpha: float,
    eps: float = 1e-9,
    max_rounds: int = 100,
) -> DescentResult:
    """Alternate between the best threshold for fixed probabilities and the
    best probabilities for a fixed threshold.

    ``flows[i, k]`` is the flow of support plan i in scenario k. Every iterate
    is feasible, so the returned value bounds the interval's optimum from
    above. Stops when the threshold step no longer improves by a factor
    ``1 - eps``.
    """
    flows = np.atleast_2d(np.asarray(flows, dtype=float))
    u = np.asarray(u0, dtype=float)
    if u.shape != (flows.shape[0],):
        raise ContractError("starting probabilities must match the support size")
    bounds = (box.lo, box.hi)
    rounds = 0
    while True:
        rounds += 1
        wc = worst_case_cvar_flows(flows, u, amb, alpha, bounds)
        if flows.shape[0] == 1 or rounds >= max_rounds:
            return DescentResult(wc.value, wc.zeta, u, rounds)
        t2, u_next = fixed_threshold_optimum(flows, wc.zeta, amb, alpha)
        if t2 >= (1.0 - eps) * wc.value - 1e-12 * (1.0 + abs(wc.value)):
            return DescentResult(wc.value, wc.zeta, u, rounds)
        u = u_next


@dataclass
class BnbNode:
    box: IntervalBox
    lb: float
    ub: float
    zeta_star_ub: float
    support: list[Plan]
    probs: np.ndarray = field(repr=False)
    cap_reached: bool = False
    columns_added: int = 0
    cg_iterations: int = 0
    descent_rounds: int = 0

    @property
    def gap(self) -> float:
        return self.ub - self.lb


def bound_box(
    box: IntervalBox,
    pool: ColumnPool,
    amb: BudgetedAmbiguitySet,
    alpha: float,
    budget: int,
    incumbent: Sequence[Plan] = (),
    config: BnbConfig | None = None,
) -> BnbNode:
    """Lower and upper bounds of the problem restricted to ``box``.

    ``pool`` grows in place with the columns priced in.
    """
    config = config or BnbConfig()
    cg = column_generation(
        box, pool, amb, alpha, budget, pricing=config.pricing, max_columns=config.max_columns
    )
    master = cg.master
    support = [pl for pl, x in zip(master.plans, master.u) if x > SUPPORT_TOL]
    weights = [float(x) for x in master.u if x > SUPPORT_TOL]
    for pl in incumbent:
        if pl not in support:
            support.append(pl)
            weights.append(0.0)
    u0 = np.array(weights) / sum(weights)
    cd = coordinate_descent(
        pool.flow_matrix(support), u0, box, amb, alpha, config.descent_eps, config.descent_rounds
    )
    return BnbNode(
        box=box,
        lb=cg.lower_bound,
        ub=cd.value,
        zeta_star_ub=cd.zeta,
        support=support,
        probs=cd.probs,
        cap_reached=cg.cap_reached,
        columns_added=cg.columns_added,
        cg_iterations=cg.iterations,
        descent_rounds=cd.rounds,
    )


def split_point(box: IntervalBox, zeta_hat: float | None) -> float:
    """Fraction at which to split ``box``: closer to the incumbent threshold
    so that it ends up in the narrower child."""
    if zeta_hat is None:
        return 0.5
    return 0.2 if (zeta_hat - box.lo) < (box.hi - zeta_hat) else 0.8


def _children(box: IntervalBox, zeta_hat: float | None, n: int) -> list[IntervalBox]:
    if n == 2:
        return list(box.split(split_point(box, zeta_hat)))
    cuts = np.linspace(box.lo, box.hi, n + 1)
    cuts[0], cuts[-1] = box.lo, box.hi
    return [IntervalBox(float(a), float(b)) for a, b in zip(cuts[:-1], cuts[1:])]


@dataclass
class SolverResult:
    strategy: RandomizedStrategy
    value: float
    gap: float
    lower_bound: float
    incumbent_value: float
    zeta: float
    limit_reached: bool
    stats: dict
    nodes: list[dict] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "gap": self.gap,
            "support": self.strategy.to_dict(),
            "stats": {
                **self.stats,
                "lower_bound": self.lower_bound,
                "incumbent_value": self.incumbent_value,
                "zeta": self.zeta,
                "limit_reached": self.limit_reached,
            },
        }


def relative_gap(upper: float, lower: float) -> float:
    return (upper - lower) / max(1.0, abs(upper))


def spatial_bnb(
    net: Network,
    scenarios,
    amb: BudgetedAmbiguitySet,
    alpha: float,
    budget: int,
    eps: float = 1e-4,
    config: BnbConfig | None = None,
    progress: Callable[[dict], None] | None = None,
) -> SolverResult:
    """Globally minimize the worst-case CVaR over randomized strategies.

    Nodes are explored in order of lower bound (ties by the left end of the
    interval). A node is branched while its upper bound exceeds
    ``(1 + eps)`` times its lower bound, and discarded once its lower bound
    reaches the incumbent. The returned strategy is recovered by pricing to
    optimality at the incumbent threshold and then re-evaluated exactly.
    """
    if not eps > 0:
        raise ContractError("eps must be positive")
    alpha = check_alpha(alpha)
    config = config or BnbConfig()
    flows = FlowTable(net, scenarios)
    if flows.scenario_count != amb.size:
        raise ContractError("scenario count and ambiguity set size differ")
    start = time.perf_counter()
    pool = ColumnPool(flows)
    root = IntervalBox(0.0, zeta_bar(net, flows.scenarios))

    stats = {"nodes": 0, "branched": 0, "pruned": 0, "cg_iterations": 0, "descent_rounds": 0,
             "cap_reached": 0}
    node_log: list[dict] = []
    best_ub, zeta_hat, incumbent = INF, None, []
    closed_lb = INF
    limit_reached = False

    def evaluate(box: IntervalBox) -> BnbNode:
        nonlocal best_ub, zeta_hat, incumbent
        node = bound_box(box, pool, amb, alpha, budget, incumbent, config)
        stats["nodes"] += 1
        stats["cg_iterations"] += node.cg_iterations
        stats["descent_rounds"] += node.descent_rounds
        stats["cap_reached"] += int(node.cap_reached)
        if node.ub < best_ub:
            best_ub, zeta_hat = node.ub, node.zeta_star_ub
            incumbent = [pl for pl, x in zip(node.support, node.probs) if x > SUPPORT_TOL]
        entry = {"lo": box.lo, "hi": box.hi, "lb": node.lb, "ub": node.ub,
                 "incumbent": best_ub, "pool": len(pool)}
        node_log.append(entry)
        log.info("node %d [%.6g, %.6g] lb=%.8g ub=%.8g UB*=%.8g pool=%d", stats["nodes"],
                 box.lo, box.hi, node.lb, node.ub, best_ub, len(pool))
        if progress is not None:
            progress(entry)
        return node

    counter = itertools.count()
    heap: list = []

    def push(node: BnbNode):
        if node.lb >= best_ub:
            stats["pruned"] += 1
            return
        heapq.heappush(heap, (node.lb, node.box.lo, next(counter), node))

    push(evaluate(root))
    while heap:
        if stats["nodes"] >= config.max_nodes or (
            config.time_limit is not None and time.perf_counter() - start > config.time_limit
        ):
            limit_reached = True
            break
        lb, _, _, node = heapq.heappop(heap)
        if lb >= best_ub:
            stats["pruned"] += 1
            continue
        if node.ub > (1.0 + eps) * node.lb + 1e-9 and node.box.width > config.min_width:
            stats["branched"] += 1
            for child in _children(node.box, zeta_hat, config.split_count):
                push(evaluate(child))
        else:
            closed_lb = min(closed_lb, node.lb)

    open_lb = min((entry[0] for entry in heap), default=INF)

    # recover the strategy at the incumbent threshold, pricing to optimality
    point = IntervalBox(zeta_hat, zeta_hat)
    final = column_generation(point, pool, amb, alpha, budget, pricing=config.pricing,
                              max_columns=config.max_columns)
    strategy = _strategy(*final.master.support())
    wc = worst_case_cvar_flows(pool.flow_matrix(strategy.support), strategy.probs, amb, alpha,
                               (root.lo, root.hi))
    if wc.value > best_ub + 1e-7 * (1.0 + abs(best_ub)):
        # recovery lost accuracy; fall back to the incumbent support
        _, probs = fixed_threshold_optimum(pool.flow_matrix(incumbent), zeta_hat, amb, alpha)
        strategy = _strategy(incumbent, probs)
        wc = worst_case_cvar_flows(pool.flow_matrix(strategy.support), strategy.probs, amb,
                                   alpha, (root.lo, root.hi))
    value = wc.value
    lower = min(closed_lb, open_lb, value)
    stats.update(
        columns=len(pool),
        runtime=time.perf_counter() - start,
        recovery_columns=final.columns_added,
    )
    return SolverResult(
        strategy=strategy,
        value=value,
        gap=relative_gap(value, lower),
        lower_bound=lower,
        incumbent_value=best_ub,
        zeta=float(zeta_hat),
        limit_reached=limit_reached,
        stats=stats,
        nodes=node_log,
    )


def _strategy(plans, probs) -> RandomizedStrategy:
    return RandomizedStrategy(tuple(as_plan(p) for p in plans), np.asarray(probs)).trimmed()
