"""CVaR, the budgeted ambiguity set and worst-case CVaR evaluation.

Worst-case CVaR over the budgeted set is computed from its linear robust
counterpart. For a per-scenario tail term ``gamma_k`` the worst case of
``zeta + sum_k q_k gamma_k`` over the set equals the optimum of

    min  zeta + sum(w) + sum(w_minus) + budget * chi + q_hat . beta + max_k (gamma_k - beta_k)
    s.t. chi >= q_bar_k beta_k - w_k,  chi >= -q_bar_k beta_k - w_minus_k,  w, w_minus, chi >= 0,

which is written with an epigraph variable ``t`` and one row per scenario. The
duals of those rows form a maximizing distribution ``q``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import ContractError, Network, Plan, as_plan, flow_matrix
from .lp import EQ, INF, LE, OPTIMAL, LinearModel, NumericalInstabilityError, solve_lp

PROB_TOL = 1e-9
# plans with smaller probability are dropped from u-fixed models
SUPPORT_TOL = 1e-9


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 <= alpha < 1.0:
        raise ContractError(f"risk level alpha={alpha} must lie in [0, 1)")
    return alpha


def check_distribution(probs, size: int | None = None) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or (size is not None and len(p) != size):
        raise ContractError("probability vector has the wrong shape")
    if np.any(p < -PROB_TOL) or abs(p.sum() - 1.0) > PROB_TOL:
        raise ContractError("probabilities must be nonnegative and sum to 1")
    return np.clip(p, 0.0, None)


@dataclass(frozen=True)
class BudgetedAmbiguitySet:
    """Distributions ``q = q_hat + diag(q_bar) z`` on the simplex with
    ``|z_k| <= 1`` and ``sum |z_k| <= gamma``."""

    q_hat: np.ndarray
    q_bar: np.ndarray
    gamma: float

    def __post_init__(self):
        q_hat = check_distribution(self.q_hat)
        q_bar = np.asarray(self.q_bar, dtype=float)
        if q_bar.shape != q_hat.shape:
            raise ContractError("q_hat and q_bar must have the same length")
        if np.any(q_bar < 0):
            raise ContractError("q_bar must be nonnegative")
        if self.gamma < 0:
            raise ContractError("gamma must be nonnegative")
        object.__setattr__(self, "q_hat", q_hat)
        object.__setattr__(self, "q_bar", q_bar)
        # budgets above |K| are equivalent to |K|
        object.__setattr__(self, "gamma", float(min(self.gamma, len(q_hat))))

    @classmethod
    def uniform(cls, k: int, gamma: float, q_bar: float = 1.0) -> "BudgetedAmbiguitySet":
        return cls(np.full(k, 1.0 / k), np.full(k, float(q_bar)), gamma)

    @property
    def size(self) -> int:
        return len(self.q_hat)

    def contains(self, q, tol: float = 1e-7) -> bool:
        q = np.asarray(q, dtype=float)
        if np.any(q < -tol) or abs(q.sum() - 1.0) > tol:
            return False
        diff = q - self.q_hat
        z = np.zeros_like(diff)
        nz = self.q_bar > 0
        if np.any(np.abs(diff[~nz]) > tol):
            return False
        z[nz] = diff[nz] / self.q_bar[nz]
        return bool(np.all(np.abs(z) <= 1 + tol) and np.abs(z).sum() <= self.gamma + tol)


@dataclass(frozen=True)
class RandomizedStrategy:
    """Probability distribution over a finite set of interdiction plans."""

    support: tuple[Plan, ...]
    probs: np.ndarray

    def __post_init__(self):
        support = tuple(as_plan(p) for p in self.support)
        if len(set(support)) != len(support):
            raise ContractError("support plans must be distinct")
        probs = check_distribution(self.probs, len(support))
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def point_mass(cls, plan) -> "RandomizedStrategy":
        return cls((as_plan(plan),), np.array([1.0]))

    def check_budget(self, budget: int) -> None:
        for p in self.support:
            if len(p) > budget:
                raise ContractError(f"plan {p} exceeds the budget {budget}")

    def trimmed(self, tol: float = SUPPORT_TOL) -> "RandomizedStrategy":
        keep = self.probs > tol
        p = self.probs[keep]
        return RandomizedStrategy(tuple(s for s, k in zip(self.support, keep) if k), p / p.sum())

    def to_dict(self) -> list[dict]:
        return [{"arcs": list(s), "prob": float(p)} for s, p in zip(self.support, self.probs)]


def cvar_discrete(values, probs, alpha: float) -> float:
    """CVaR of a finite distribution: the mean of the upper (1 - alpha) tail."""
    alpha = check_alpha(alpha)
    v = np.asarray(values, dtype=float).ravel()
    p = check_distribution(np.asarray(probs, dtype=float).ravel(), len(v))
    if alpha == 0.0:
        return float(np.dot(v, p))
    order = np.argsort(-v, kind="stable")
    v, p = v[order], p[order]
    mass = 1.0 - alpha
    before = np.concatenate(([0.0], np.cumsum(p)[:-1]))
    take = np.clip(mass - before, 0.0, p)
    return float(np.dot(take, v) / mass)


def cvar_by_threshold(values, probs, alpha: float) -> float:
    """``min_zeta zeta + E[(f - zeta)^+] / (1 - alpha)``; the minimum sits at
    one of the support points."""
    alpha = check_alpha(alpha)
    v = np.asarray(values, dtype=float).ravel()
    p = check_distribution(np.asarray(probs, dtype=float).ravel(), len(v))
    cand = np.unique(v)
    excess = np.maximum(v[None, :] - cand[:, None], 0.0) @ p
    return float(np.min(cand + excess / (1.0 - alpha)))


def add_ambiguity_rows(
    model: LinearModel,
    amb: BudgetedAmbiguitySet,
    alpha: float,
    tails: Sequence[Sequence[int]],
    *,
    zeta_var: int | None = None,
    zeta_const: float = 0.0,
) -> list[str]:
    """Add the robust counterpart of ``zeta + sum_k q_k tail_k/(1-alpha) <= t``.

    ``tails[k]`` lists the model variables summed in scenario ``k``'s tail
    term. The threshold is the variable ``zeta_var`` when given, otherwise the
    constant ``zeta_const``. Creates variables
    ``t`` (the objective), ``w``, ``w_minus``, ``chi`` and ``beta`` and returns
    the names of the per-scenario epigraph rows, whose duals are the worst-case
    distribution.
    """
    K = amb.size
    scale = 1.0 / (1.0 - alpha)
    t = model.add_var("t", -INF, INF, 1.0)
    w = [model.add_var(f"w[{k}]", 0.0) for k in range(K)]
    wm = [model.add_var(f"w_minus[{k}]", 0.0) for k in range(K)]
    chi = model.add_var("chi", 0.0)
    beta = [model.add_var(f"beta[{k}]", -INF, INF) for k in range(K)]
    shared: dict[int, float] = {t: -1.0, chi: amb.gamma}
    for k in range(K):
        shared[w[k]] = 1.0
        shared[wm[k]] = 1.0
        if amb.q_hat[k] != 0.0:
            shared[beta[k]] = amb.q_hat[k]
    const = 0.0
    if zeta_var is not None:
        shared[zeta_var] = 1.0
    else:
        const = float(zeta_const)
    names = []
    for k in range(K):
        row = dict(shared)
        row[beta[k]] = row.get(beta[k], 0.0) - 1.0
        for j in tails[k]:
            row[j] = row.get(j, 0.0) + scale
        name = f"epigraph[{k}]"
        model.add_constraint(name, row, LE, -const)
        names.append(name)
        model.add_constraint(f"chi_plus[{k}]", {beta[k]: amb.q_bar[k], w[k]: -1.0, chi: -1.0}, LE, 0.0)
        model.add_constraint(f"chi_minus[{k}]", {beta[k]: -amb.q_bar[k], wm[k]: -1.0, chi: -1.0}, LE, 0.0)
    return names


def worst_case_q(sol, epigraph_rows: Sequence[str]) -> np.ndarray:
    q = np.array([max(sol.duals[n], 0.0) for n in epigraph_rows])
    total = q.sum()
    return q / total if total > 0 else q


@dataclass(frozen=True)
class WorstCase:
    value: float
    q: np.ndarray
    zeta: float


def _require_optimal(sol, what: str):
    if sol.status != OPTIMAL:
        raise NumericalInstabilityError(f"{what}: LP status {sol.status}")
    return sol


def worst_case_cvar_flows(
    flows: np.ndarray,
    probs,
    amb: BudgetedAmbiguitySet,
    alpha: float,
    zeta_bounds: tuple[float, float] | None = None,
) -> WorstCase:
    """Worst-case CVaR of a fixed mixed strategy given its flow matrix.

    ``flows[i, k]`` is the flow of the i-th support plan in scenario k. The
    threshold ``zeta`` is optimized over ``zeta_bounds`` (default: zero to the
    largest flow, which contains a minimizer).
    """
    alpha = check_alpha(alpha)
    flows = np.atleast_2d(np.asarray(flows, dtype=float))
    probs = check_distribution(probs, flows.shape[0])
    if flows.shape[1] != amb.size:
        raise ContractError("flow matrix and ambiguity set disagree on the scenario count")
    if zeta_bounds is None:
        zeta_bounds = (0.0, max(float(flows.max(initial=0.0)), 0.0))
    lo, hi = zeta_bounds
    model = LinearModel("worst_case_cvar")
    zeta = model.add_var("zeta", lo, hi)
    keep = [i for i in range(len(probs)) if probs[i] > SUPPORT_TOL]
    tails: list[list[int]] = [[] for _ in range(amb.size)]
    for i in keep:
        p = probs[i]
        for k in range(amb.size):
            d = model.add_var(f"Delta[{i},{k}]", 0.0)
            tails[k].append(d)
            # Delta >= p (f - zeta)
            model.add_constraint(f"excess[{i},{k}]", {zeta: -p, d: -1.0}, LE, -p * flows[i, k])
    rows = add_ambiguity_rows(model, amb, alpha, tails, zeta_var=zeta)
    sol = _require_optimal(solve_lp(model), "worst_case_cvar")
    return WorstCase(sol.objective, worst_case_q(sol, rows), sol.value("zeta"))


def fixed_threshold_optimum(
    flows: np.ndarray,
    zeta: float,
    amb: BudgetedAmbiguitySet,
    alpha: float,
) -> tuple[float, np.ndarray]:
    """Best mixed strategy over the rows of ``flows`` for a fixed threshold.

    Returns the optimal value and the optimal probabilities.
    """
    alpha = check_alpha(alpha)
    flows = np.atleast_2d(np.asarray(flows, dtype=float))
    n, K = flows.shape
    model = LinearModel("fixed_threshold")
    u = [model.add_var(f"u[{i}]", 0.0, 1.0) for i in range(n)]
    model.add_constraint("u_sum", {j: 1.0 for j in u}, EQ, 1.0)
    tails: list[list[int]] = [[] for _ in range(K)]
    for i in range(n):
        for k in range(K):
            excess = flows[i, k] - zeta
            if excess <= 0.0:
                continue
            d = model.add_var(f"Delta[{i},{k}]", 0.0)
            tails[k].append(d)
            model.add_constraint(f"excess[{i},{k}]", {u[i]: excess, d: -1.0}, LE, 0.0)
    add_ambiguity_rows(model, amb, alpha, tails, zeta_const=zeta)
    sol = _require_optimal(solve_lp(model), "fixed_threshold")
    probs = np.clip(sol.x[u], 0.0, None)
    return sol.objective, probs / probs.sum()


def _strategy_flows(net: Network, scenarios, strategy: RandomizedStrategy) -> np.ndarray:
    return flow_matrix(net, np.asarray(scenarios, dtype=float), strategy.support)


def worst_case_cvar(
    net: Network,
    scenarios,
    amb: BudgetedAmbiguitySet,
    strategy: RandomizedStrategy,
    alpha: float,
) -> tuple[float, np.ndarray]:
    """Worst-case CVaR of ``strategy`` over ``amb`` and a maximizing ``q``."""
    res = worst_case_cvar_flows(_strategy_flows(net, scenarios, strategy), strategy.probs, amb, alpha)
    return res.value, res.q


def loizou_objective(
    net: Network,
    scenarios,
    amb: BudgetedAmbiguitySet,
    strategy: RandomizedStrategy,
    alpha: float,
) -> float:
    """Worst-case CVaR over scenarios of the strategy's expected flow."""
    flows = _strategy_flows(net, scenarios, strategy)
    expected = strategy.probs @ flows
    return worst_case_cvar_flows(expected[None, :], np.array([1.0]), amb, alpha).value


class Dominance(str, enum.Enum):
    A_DOMINATES = "a_dominates"
    B_DOMINATES = "b_dominates"
    INCOMPARABLE = "incomparable"
    EQUAL = "equal"


def survival(values, probs, at) -> np.ndarray:
    """``P(f >= t)`` for each ``t`` in ``at``."""
    v = np.asarray(values, dtype=float).ravel()
    p = np.asarray(probs, dtype=float).ravel()
    at = np.asarray(at, dtype=float)
    return (v[None, :] >= at[:, None] - 1e-12).astype(float) @ p


def dominance_check(
    net: Network,
    scenarios,
    q,
    a: RandomizedStrategy,
    b: RandomizedStrategy,
    tol: float = 1e-12,
) -> Dominance:
    """Compare the flow distributions induced by two strategies under ``q``.

    ``a`` dominates ``b`` when its survival function ``P(f >= t)`` is nowhere
    above that of ``b`` and strictly below it somewhere (less flow is better
    for the interdictor).
    """
    q = check_distribution(q)
    fa = _strategy_flows(net, scenarios, a)
    fb = _strategy_flows(net, scenarios, b)
    pa = np.outer(a.probs, q)
    pb = np.outer(b.probs, q)
    points = np.unique(np.concatenate([fa.ravel(), fb.ravel()]))
    sa = survival(fa, pa, points)
    sb = survival(fb, pb, points)
    a_le = np.all(sa <= sb + tol)
    b_le = np.all(sb <= sa + tol)
    if a_le and b_le:
        return Dominance.EQUAL
    if a_le:
        return Dominance.A_DOMINATES
    if b_le:
        return Dominance.B_DOMINATES
    return Dominance.INCOMPARABLE
