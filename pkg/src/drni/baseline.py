"""Best deterministic interdiction plan, by a plan-indexed MILP or by brute force."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import ContractError, Network, Plan, enumerate_plans, zeta_bar
from .lp import EQ, GE, LE, OPTIMAL, LinearModel, NumericalInstabilityError, solve_mip
from .master import ENUMERATION_CAP, FlowTable
from .risk import (
    BudgetedAmbiguitySet,
    RandomizedStrategy,
    add_ambiguity_rows,
    check_alpha,
    worst_case_cvar_flows,
)

# the MILP carries one binary per plan
MILP_PLAN_CAP = 2_000
# plans whose values differ by less than this (relative) are tied
TIE_TOL = 1e-7


@dataclass(frozen=True)
class DeterministicResult:
    plan: Plan
    value: float

    @property
    def strategy(self) -> RandomizedStrategy:
        return RandomizedStrategy.point_mass(self.plan)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "gap": 0.0,
            "support": self.strategy.to_dict(),
            "stats": {"deterministic": True},
        }


def _point_value(flows: np.ndarray, amb: BudgetedAmbiguitySet, alpha: float) -> float:
    return worst_case_cvar_flows(flows[None, :], np.ones(1), amb, alpha).value


def _tied(value: float, best: float) -> bool:
    return value <= best + TIE_TOL * (1.0 + abs(best))


def solve_deterministic_enumerate(
    net: Network,
    scenarios,
    amb: BudgetedAmbiguitySet,
    alpha: float,
    budget: int,
    cap: int = ENUMERATION_CAP,
) -> DeterministicResult:
    """Evaluate every plan with at most ``budget`` arcs and keep the best;
    among tied plans the lexicographically smallest arc set wins."""
    alpha = check_alpha(alpha)
    table = FlowTable(net, scenarios)
    plans = enumerate_plans(net.arc_count, budget, cap)
    values = np.array([_point_value(table(p), amb, alpha) for p in plans])
    best = values.min()
    i = next(i for i, v in enumerate(values) if _tied(v, best))
    return DeterministicResult(plans[i], float(values[i]))


def build_deterministic_model(
    plans: list[Plan],
    flows: np.ndarray,
    amb: BudgetedAmbiguitySet,
    alpha: float,
    big_m: float,
) -> tuple[LinearModel, list[str]]:
    """Plan-indexed MILP: one binary ``u`` per plan, ``sum u = 1``, and the
    products ``eta = u * zeta`` linearized exactly with the bound ``big_m``
    on the threshold."""
    model = LinearModel("deterministic")
    zeta = model.add_var("zeta", 0.0, big_m)
    tails: list[list[int]] = [[] for _ in range(amb.size)]
    binaries = []
    for i in range(len(plans)):
        u = model.add_var(f"u[{i}]", 0.0, 1.0)
        eta = model.add_var(f"eta[{i}]", 0.0, big_m)
        binaries.append(f"u[{i}]")
        model.add_constraint(f"eta_le_zeta[{i}]", {eta: 1.0, zeta: -1.0}, LE, 0.0)
        model.add_constraint(f"eta_ge_zeta[{i}]", {eta: 1.0, zeta: -1.0, u: -big_m}, GE, -big_m)
        model.add_constraint(f"eta_le_u[{i}]", {eta: 1.0, u: -big_m}, LE, 0.0)
        for k in range(amb.size):
            d = model.add_var(f"Delta[{i},{k}]", 0.0)
            tails[k].append(d)
            model.add_constraint(f"excess[{i},{k}]", {u: flows[i, k], eta: -1.0, d: -1.0}, LE, 0.0)
    add_ambiguity_rows(model, amb, alpha, tails, zeta_var=zeta)
    model.add_constraint("u_sum", {model.var(b): 1.0 for b in binaries}, EQ, 1.0)
    return model, binaries


def solve_deterministic_milp(
    net: Network,
    scenarios,
    amb: BudgetedAmbiguitySet,
    alpha: float,
    budget: int,
    plans: list[Plan] | None = None,
    cap: int = MILP_PLAN_CAP,
) -> DeterministicResult:
    """Best single plan from the plan-indexed MILP.

    A second MILP keeps the worst-case CVaR within the tie tolerance of the
    optimum and picks the lexicographically smallest plan among the optimal
    ones, matching :func:`solve_deterministic_enumerate`.
    """
    alpha = check_alpha(alpha)
    table = FlowTable(net, scenarios)
    if plans is None:
        plans = enumerate_plans(net.arc_count, budget, cap)
    plans = sorted(set(plans))
    if len(plans) > cap:
        raise ContractError(
            f"{len(plans)} plans exceed the MILP cap {cap}; use solve_deterministic_enumerate"
        )
    if any(len(p) > budget for p in plans):
        raise ContractError("plan universe contains plans over the budget")
    flows = np.array([table(p) for p in plans])
    model, binaries = build_deterministic_model(
        plans, flows, amb, alpha, zeta_bar(net, table.scenarios)
    )
    t = model.var("t")
    sol = solve_mip(model, binaries)
    if sol.status != OPTIMAL:
        raise NumericalInstabilityError(f"deterministic MILP: status {sol.status}")
    best = sol.objective

    # lexicographic second stage over the optimal face
    model.add_constraint("optimal_face", {t: 1.0}, LE, best + TIE_TOL * (1.0 + abs(best)))
    model.cost = [0.0] * model.num_vars
    for rank, b in enumerate(binaries):
        model.cost[model.var(b)] = float(rank)
    sol = solve_mip(model, binaries)
    if sol.status != OPTIMAL:
        raise NumericalInstabilityError(f"deterministic tie-break MILP: status {sol.status}")
    chosen = int(np.argmax([sol.value(b) for b in binaries]))
    plan = plans[chosen]
    return DeterministicResult(plan, _point_value(table(plan), amb, alpha))
