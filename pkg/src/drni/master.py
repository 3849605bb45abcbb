"""Lower bounds on an interval of thresholds by column generation.

The bilinear products ``eta_l = u_l * zeta`` are relaxed with McCormick
envelopes over the threshold interval plus the reformulation cut
``sum_l eta_l = zeta``. The resulting LP is solved over a growing pool of
interdiction plans; new plans are found by a pricing MILP that dualizes each
scenario's max-flow problem.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations
from math import comb
from typing import Callable

import numpy as np

from .graph import ContractError, Network, Plan, as_plan, max_flow_values
from .lp import (
    EQ,
    GE,
    INF,
    INFEASIBLE,
    LE,
    OPTIMAL,
    LinearModel,
    LpSolution,
    NumericalInstabilityError,
    solve_lp,
    solve_mip,
)
from .risk import BudgetedAmbiguitySet, add_ambiguity_rows, check_alpha, worst_case_q

log = logging.getLogger(__name__)

ENUMERATION_CAP = 100_000
# "auto" pricing enumerates when there are at most this many plans
AUTO_ENUMERATION_LIMIT = 2_000


@dataclass(frozen=True)
class IntervalBox:
    lo: float
    hi: float

    def __post_init__(self):
        if not (0.0 <= self.lo <= self.hi):
            raise ContractError(f"invalid threshold interval [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def split(self, p: float) -> tuple["IntervalBox", "IntervalBox"]:
        mid = self.lo + p * (self.hi - self.lo)
        return IntervalBox(self.lo, mid), IntervalBox(mid, self.hi)


class FlowTable:
    """Memoized ``f(plan, k)`` for every scenario of an instance."""

    def __init__(self, net: Network, scenarios):
        self.net = net
        self.scenarios = np.atleast_2d(np.asarray(scenarios, dtype=float))
        if self.scenarios.shape[1] != net.arc_count:
            raise ContractError("scenario capacity vectors must have one entry per arc")
        self._cache: dict[Plan, np.ndarray] = {}

    @property
    def scenario_count(self) -> int:
        return self.scenarios.shape[0]

    def __call__(self, plan) -> np.ndarray:
        plan = as_plan(plan)
        hit = self._cache.get(plan)
        if hit is None:
            hit = max_flow_values(self.net, self.scenarios, plan)
            self._cache[plan] = hit
        return hit


class ColumnPool:
    """Interdiction plans available to the restricted master, starting with
    the empty plan. Shared across all intervals of a branch-and-bound run."""

    def __init__(self, flows: FlowTable, plans=()):
        self.flows = flows
        self.plans: list[Plan] = []
        self._members: set[Plan] = set()
        self.add(())
        for p in plans:
            self.add(p)

    def add(self, plan) -> bool:
        plan = as_plan(plan)
        if plan in self._members:
            return False
        self._members.add(plan)
        self.plans.append(plan)
        return True

    def __contains__(self, plan) -> bool:
        return as_plan(plan) in self._members

    def __len__(self) -> int:
        return len(self.plans)

    def flow_matrix(self, plans=None) -> np.ndarray:
        plans = self.plans if plans is None else plans
        return np.array([self.flows(p) for p in plans])

    def snapshot(self) -> "ColumnPool":
        return ColumnPool(self.flows, self.plans)


@dataclass
class MasterSolution:
    objective: float
    plans: list[Plan]
    u: np.ndarray
    eta: np.ndarray
    zeta: float
    phi: np.ndarray
    p: float
    pi: float
    lp: LpSolution = field(repr=False)

    def support(self, tol: float = 1e-9) -> tuple[list[Plan], np.ndarray]:
        keep = self.u > tol
        probs = self.u[keep]
        return [pl for pl, k in zip(self.plans, keep) if k], probs / probs.sum()


def build_master(
    pool: ColumnPool,
    box: IntervalBox,
    amb: BudgetedAmbiguitySet,
    alpha: float,
) -> tuple[LinearModel, list[str]]:
    """Restricted master LP over the plans currently in ``pool``.

    Plans outside the pool have their variables fixed at zero; their McCormick
    rows reduce to the threshold bounds and are omitted. Returns the model and
    the names of the per-scenario epigraph rows.
    """
    alpha = check_alpha(alpha)
    if len(pool) == 0:
        raise ContractError("the column pool is empty")
    K = amb.size
    flows = pool.flow_matrix()
    lo, hi = box.lo, box.hi
    model = LinearModel("restricted_master")
    zeta = model.add_var("zeta", lo, hi)
    tails: list[list[int]] = [[] for _ in range(K)]
    u_vars, eta_vars = [], []
    for i in range(len(pool)):
        u = model.add_var(f"u[{i}]", 0.0, INF)
        eta = model.add_var(f"eta[{i}]", -INF, INF)
        u_vars.append(u)
        eta_vars.append(eta)
        for k in range(K):
            d = model.add_var(f"Delta[{i},{k}]", 0.0)
            tails[k].append(d)
            model.add_constraint(f"excess[{i},{k}]", {u: flows[i, k], eta: -1.0, d: -1.0}, LE, 0.0)
        # McCormick envelopes of eta = u * zeta over u in [0, 1], zeta in [lo, hi]
        model.add_constraint(f"mccormick_u_lo[{i}]", {u: lo, eta: -1.0}, LE, 0.0)
        model.add_constraint(f"mccormick_u_hi[{i}]", {eta: 1.0, u: -hi}, LE, 0.0)
        model.add_constraint(f"mccormick_zeta_hi[{i}]", {zeta: 1.0, u: hi, eta: -1.0}, LE, hi)
        model.add_constraint(f"mccormick_zeta_lo[{i}]", {eta: 1.0, zeta: -1.0, u: -lo}, LE, -lo)
    epi = add_ambiguity_rows(model, amb, alpha, tails, zeta_var=zeta)
    model.add_constraint("u_sum", {u: 1.0 for u in u_vars}, EQ, 1.0)
    row = {e: 1.0 for e in eta_vars}
    row[zeta] = -1.0
    model.add_constraint("rrlt", row, EQ, 0.0)
    return model, epi


def solve_master(
    pool: ColumnPool, box: IntervalBox, amb: BudgetedAmbiguitySet, alpha: float
) -> MasterSolution:
    model, epi = build_master(pool, box, amb, alpha)
    sol = solve_lp(model)
    if sol.status != OPTIMAL:
        raise NumericalInstabilityError(f"restricted master: LP status {sol.status}")
    n = len(pool)
    u = np.clip(sol.values(f"u[{i}]" for i in range(n)), 0.0, None)
    return MasterSolution(
        objective=sol.objective,
        plans=list(pool.plans),
        u=u,
        eta=sol.values(f"eta[{i}]" for i in range(n)),
        zeta=sol.value("zeta"),
        phi=np.array([sol.duals[r] for r in epi]),
        p=sol.duals["u_sum"],
        pi=sol.duals["rrlt"],
        lp=sol,
    )


@dataclass(frozen=True)
class Duals:
    """Master duals used by pricing: epigraph rows, ``sum u = 1`` and
    ``sum eta = zeta``, all in the <=-form sign convention."""

    phi: np.ndarray
    p: float
    pi: float

    @classmethod
    def of(cls, master: MasterSolution) -> "Duals":
        return cls(np.asarray(master.phi, dtype=float), float(master.p), float(master.pi))


def reduced_cost(flows_k: np.ndarray, duals: Duals, box: IntervalBox, alpha: float) -> float:
    """Reduced cost of a plan with scenario flows ``flows_k`` (unit weight).

    Minimizes ``sum_k phi_k (f_k - eta)^+ / (1 - alpha) + pi * eta`` over
    ``eta`` in the box; the objective is convex piecewise linear with kinks at
    the flows, so the minimum is at an endpoint or a kink.
    """
    f = np.asarray(flows_k, dtype=float)
    cand = np.concatenate(([box.lo, box.hi], f[(f > box.lo) & (f < box.hi)]))
    excess = np.maximum(f[None, :] - cand[:, None], 0.0) @ duals.phi
    vals = excess / (1.0 - alpha) + duals.pi * cand
    return float(duals.p + vals.min())


def price_enumerate(
    duals: Duals,
    box: IntervalBox,
    flows: FlowTable,
    budget: int,
    alpha: float,
    cap: int = ENUMERATION_CAP,
    exclude=(),
) -> tuple[float, Plan | None]:
    """Pricing by exhaustion over all plans with at most ``budget`` arcs that
    are not in ``exclude``.

    Ties are resolved in favour of the lexicographically smallest arc set.
    Returns ``(inf, None)`` when every plan is excluded.
    """
    alpha = check_alpha(alpha)
    E = flows.net.arc_count
    budget = min(int(budget), E)
    total = plan_count(E, budget)
    if total > cap:
        raise ContractError(f"{total} plans exceed the enumeration cap {cap}")
    skip = {as_plan(p) for p in exclude}
    best_v, best_plan = INF, None
    for plan in sorted(p for r in range(budget + 1) for p in combinations(range(E), r)):
        if plan in skip:
            continue
        v = reduced_cost(flows(plan), duals, box, alpha)
        if v < best_v - 1e-12:
            best_v, best_plan = v, plan
    return best_v, best_plan


def build_pricing_model(
    duals: Duals,
    box: IntervalBox,
    net: Network,
    scenarios,
    budget: int,
    alpha: float,
    exclude=(),
) -> tuple[LinearModel, list[str]]:
    """MILP whose optimum is the most negative reduced cost over all plans
    except those in ``exclude``.

    Each scenario's max-flow value is replaced by its min-cut dual
    ``min (1 - l)^T C lam`` with ``Ups = diag(l) lam`` linearized. Scenarios
    with a zero epigraph dual do not affect the objective and are left out.
    Plans in ``exclude`` (the current pool) are cut off with no-good rows:
    the objective omits the duals of their own McCormick rows, so their
    value here is not their reduced cost. Returns the model and the names of
    the arc binaries.
    """
    scenarios = np.atleast_2d(np.asarray(scenarios, dtype=float))
    scale = 1.0 / (1.0 - alpha)
    E = net.arc_count
    model = LinearModel("pricing")
    model.objective_offset = duals.p
    ell = [model.add_var(f"ell[{e}]", 0.0, 1.0) for e in range(E)]
    eta = model.add_var("eta", box.lo, box.hi, duals.pi)
    model.add_constraint("budget", {j: 1.0 for j in ell}, LE, float(budget))
    for n, plan in enumerate(sorted({as_plan(p) for p in exclude})):
        members = set(plan)
        model.add_constraint(
            f"nogood[{n}]",
            {ell[e]: (-1.0 if e in members else 1.0) for e in range(E)},
            GE,
            1.0 - len(members),
        )
    d = net.sink_indicator
    for k in np.flatnonzero(duals.phi > 0.0):
        c = scenarios[k]
        delta = model.add_var(f"Delta[{k}]", 0.0, INF, duals.phi[k] * scale)
        lam = [model.add_var(f"lam[{k},{e}]", 0.0, 1.0) for e in range(E)]
        ups = {i: model.add_var(f"ups[{k},{i}]", -INF, INF) for i in net.inner_nodes}
        lin = [model.add_var(f"Ups[{k},{e}]", 0.0, INF) for e in range(E)]
        row = {eta: -1.0, delta: -1.0}
        for e in range(E):
            if c[e] != 0.0:
                row[lam[e]] = c[e]
                row[lin[e]] = -c[e]
        model.add_constraint(f"excess[{k}]", row, LE, 0.0)
        for e, (i, j) in enumerate(net.arcs):
            model.add_constraint(f"Ups_le_ell[{k},{e}]", {lin[e]: 1.0, ell[e]: -1.0}, LE, 0.0)
            model.add_constraint(f"Ups_le_lam[{k},{e}]", {lin[e]: 1.0, lam[e]: -1.0}, LE, 0.0)
            model.add_constraint(
                f"Ups_ge[{k},{e}]", {lin[e]: 1.0, lam[e]: -1.0, ell[e]: -1.0}, GE, -1.0
            )
            cut = {lam[e]: 1.0}
            if i in ups:
                cut[ups[i]] = cut.get(ups[i], 0.0) + 1.0
            if j in ups:
                cut[ups[j]] = cut.get(ups[j], 0.0) - 1.0
            model.add_constraint(f"cut[{k},{e}]", cut, GE, float(d[e]))
    return model, [f"ell[{e}]" for e in range(E)]


def price(
    duals: Duals,
    box: IntervalBox,
    net: Network,
    scenarios,
    budget: int,
    alpha: float,
    exclude=(),
) -> tuple[float, Plan | None]:
    """Most negative reduced cost over plans outside ``exclude`` and a plan
    attaining it; ``(inf, None)`` if no such plan exists."""
    alpha = check_alpha(alpha)
    model, ell = build_pricing_model(duals, box, net, scenarios, budget, alpha, exclude)
    sol = solve_mip(model, ell)
    if sol.status == INFEASIBLE:
        return INF, None
    if sol.status != OPTIMAL:
        raise NumericalInstabilityError(f"pricing MILP: status {sol.status}")
    plan = as_plan(e for e in range(net.arc_count) if sol.value(f"ell[{e}]") > 0.5)
    return sol.objective, plan


@dataclass
class ColumnGenerationResult:
    lower_bound: float
    master: MasterSolution
    iterations: int
    converged: bool
    cap_reached: bool = False
    last_reduced_cost: float = 0.0
    columns_added: int = 0


Pricer = Callable[[Duals, IntervalBox, list], tuple[float, "Plan | None"]]


def plan_count(arc_count: int, budget: int) -> int:
    return sum(comb(arc_count, r) for r in range(min(budget, arc_count) + 1))


def make_pricer(net: Network, flows: FlowTable, budget: int, alpha: float, method: str = "milp") -> Pricer:
    """Pricing routine by name: ``"milp"``, ``"enumerate"``, or ``"auto"``
    (enumeration for small plan sets, the MILP otherwise)."""
    if method == "auto":
        small = plan_count(net.arc_count, budget) <= AUTO_ENUMERATION_LIMIT
        method = "enumerate" if small else "milp"
    if method == "milp":
        return lambda duals, box, exclude: price(
            duals, box, net, flows.scenarios, budget, alpha, exclude
        )
    if method == "enumerate":
        return lambda duals, box, exclude: price_enumerate(
            duals, box, flows, budget, alpha, exclude=exclude
        )
    raise ValueError(f"unknown pricing method {method!r}")


def column_generation(
    box: IntervalBox,
    pool: ColumnPool,
    amb: BudgetedAmbiguitySet,
    alpha: float,
    budget: int,
    pricing: str | Pricer = "milp",
    max_columns: int = 500,
    tol: float = 1e-7,
) -> ColumnGenerationResult:
    """Solve the McCormick relaxation over all plans for one interval.

    Columns found by pricing are appended to ``pool`` in place. When the column
    cap stops the loop early, the returned bound is the Lagrangian bound
    ``master + min(0, reduced cost)``, which is still valid.
    """
    pricer = pricing if callable(pricing) else make_pricer(
        pool.flows.net, pool.flows, budget, alpha, pricing
    )
    added = 0
    iteration = 0
    while True:
        iteration += 1
        master = solve_master(pool, box, amb, alpha)
        v, plan = pricer(Duals.of(master), box, pool.plans)
        log.debug(
            "cg it=%d pool=%d master=%.10g v=%.3g column=%s",
            iteration, len(pool), master.objective, v, plan,
        )
        if v >= -tol * (1.0 + abs(master.objective)):
            return ColumnGenerationResult(master.objective, master, iteration, True, False, v, added)
        if added >= max_columns:
            return ColumnGenerationResult(
                master.objective + min(0.0, v), master, iteration, False, True, v, added
            )
        pool.add(plan)
        added += 1
