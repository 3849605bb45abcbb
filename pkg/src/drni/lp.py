"""Linear and mixed-binary linear programming kernel.

Models are assembled row by row with named variables and named constraints.
Continuous problems are handed to the HiGHS dual simplex shipped with scipy;
mixed-binary problems are solved by a best-bound branch-and-bound over those
LP relaxations.

Dual convention
---------------
Every dual value is reported for the constraint in ``<=`` form, i.e. as
``-d(objective)/d(rhs)`` for a minimization. Consequently ``<=`` rows carry
nonnegative duals, ``>=`` rows are reported as the dual of their negated
``<=`` row (also nonnegative), and equality rows carry a free dual equal to
the difference of the duals of the two ``<=`` rows that make up the equality.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

INF = math.inf

LE, GE, EQ = "<=", ">=", "="
_SENSES = (LE, GE, EQ)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
LIMIT = "limit"


class ModelError(ValueError):
    """Raised for malformed models (unknown variable, duplicate name, bad bounds)."""


class NumericalInstabilityError(RuntimeError):
    """Raised when the LP backend cannot produce a trustworthy answer."""


@dataclass(frozen=True)
class SolverConfig:
    feasibility_tol: float = 1e-7
    optimality_tol: float = 1e-7
    integrality_tol: float = 1e-6
    mip_gap: float = 1e-6
    max_nodes: int = 100_000


DEFAULT_CONFIG = SolverConfig()


class LinearModel:
    """A minimization LP/MIP under construction.

    Variables and constraints are identified by unique string names. Constraint
    coefficients may reference variables either by name or by the integer index
    returned from :meth:`add_var`.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self.var_names: list[str] = []
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.cost: list[float] = []
        self.objective_offset = 0.0
        self.con_names: list[str] = []
        self.rows: list[dict[int, float]] = []
        self.senses: list[str] = []
        self.rhs: list[float] = []
        self._var_index: dict[str, int] = {}
        self._con_index: dict[str, int] = {}

    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    @property
    def num_constraints(self) -> int:
        return len(self.con_names)

    def add_var(self, name: str, lb: float = 0.0, ub: float = INF, obj: float = 0.0) -> int:
        if name in self._var_index:
            raise ModelError(f"duplicate variable {name!r}")
        if lb > ub:
            raise ModelError(f"variable {name!r} has lb={lb} > ub={ub}")
        idx = len(self.var_names)
        self._var_index[name] = idx
        self.var_names.append(name)
        self.lower.append(float(lb))
        self.upper.append(float(ub))
        self.cost.append(float(obj))
        return idx

    def var(self, name: str) -> int:
        try:
            return self._var_index[name]
        except KeyError:
            raise ModelError(f"unknown variable {name!r}") from None

    def has_var(self, name: str) -> bool:
        return name in self._var_index

    def set_bounds(self, name_or_idx: str | int, lb: float, ub: float) -> None:
        j = self._resolve(name_or_idx)
        if lb > ub:
            raise ModelError(f"variable {self.var_names[j]!r} has lb={lb} > ub={ub}")
        self.lower[j] = float(lb)
        self.upper[j] = float(ub)

    def add_constraint(
        self, name: str, coeffs: Mapping[str | int, float], sense: str, rhs: float
    ) -> int:
        if name in self._con_index:
            raise ModelError(f"duplicate constraint {name!r}")
        if sense not in _SENSES:
            raise ModelError(f"constraint {name!r}: unknown sense {sense!r}")
        row: dict[int, float] = {}
        for key, val in coeffs.items():
            j = self._resolve(key)
            if val != 0.0:
                row[j] = row.get(j, 0.0) + float(val)
        idx = len(self.con_names)
        self._con_index[name] = idx
        self.con_names.append(name)
        self.rows.append(row)
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        return idx

    def constraint(self, name: str) -> int:
        try:
            return self._con_index[name]
        except KeyError:
            raise ModelError(f"unknown constraint {name!r}") from None

    def _resolve(self, key: str | int) -> int:
        if isinstance(key, str):
            return self.var(key)
        j = int(key)
        if not 0 <= j < len(self.var_names):
            raise ModelError(f"variable index {j} out of range")
        return j

    def matrix(self) -> sp.csr_matrix:
        data, rows, cols = [], [], []
        for i, row in enumerate(self.rows):
            for j, v in row.items():
                rows.append(i)
                cols.append(j)
                data.append(v)
        return sp.csr_matrix(
            (data, (rows, cols)), shape=(self.num_constraints, self.num_vars)
        )

    def copy(self) -> "LinearModel":
        other = LinearModel(self.name)
        other.var_names = list(self.var_names)
        other.lower = list(self.lower)
        other.upper = list(self.upper)
        other.cost = list(self.cost)
        other.objective_offset = self.objective_offset
        other.con_names = list(self.con_names)
        other.rows = [dict(r) for r in self.rows]
        other.senses = list(self.senses)
        other.rhs = list(self.rhs)
        other._var_index = dict(self._var_index)
        other._con_index = dict(self._con_index)
        return other


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    objective: float = math.nan
    duals: dict[str, float] = field(default_factory=dict)
    reduced_costs: np.ndarray | None = None
    # unbounded: improving ray; infeasible: Farkas multipliers keyed by row name
    ray: np.ndarray | None = None
    farkas: dict[str, float] | None = None
    var_index: Mapping[str, int] = field(default_factory=dict, repr=False)

    def value(self, name: str) -> float:
        return float(self.x[self.var_index[name]])

    def values(self, names: Iterable[str]) -> np.ndarray:
        return np.array([self.x[self.var_index[n]] for n in names])


@dataclass
class MipSolution:
    status: str
    x: np.ndarray | None = None
    objective: float = math.nan
    bound: float = -math.inf
    gap: float = math.inf
    nodes: int = 0
    var_index: Mapping[str, int] = field(default_factory=dict, repr=False)

    def value(self, name: str) -> float:
        return float(self.x[self.var_index[name]])


class _Compiled:
    """Arrays for scipy's linprog, rows split into inequality and equality blocks."""

    def __init__(self, model: LinearModel):
        self.model = model
        A = model.matrix()
        senses = np.array(model.senses, dtype=object)
        rhs = np.array(model.rhs, dtype=float)
        self.ub_rows = np.flatnonzero(senses != EQ)
        self.eq_rows = np.flatnonzero(senses == EQ)
        # >= rows are negated into <= rows
        sign = np.where(senses[self.ub_rows] == GE, -1.0, 1.0)
        self.A_ub = sp.diags(sign) @ A[self.ub_rows] if len(self.ub_rows) else None
        self.b_ub = sign * rhs[self.ub_rows] if len(self.ub_rows) else None
        self.A_eq = A[self.eq_rows] if len(self.eq_rows) else None
        self.b_eq = rhs[self.eq_rows] if len(self.eq_rows) else None
        self.c = np.array(model.cost, dtype=float)
        self.lower = np.array(model.lower, dtype=float)
        self.upper = np.array(model.upper, dtype=float)

    def bounds(self, lower=None, upper=None):
        lo = self.lower if lower is None else lower
        hi = self.upper if upper is None else upper
        lo = np.where(np.isneginf(lo), None, lo)
        hi = np.where(np.isposinf(hi), None, hi)
        return list(zip(lo, hi))

    def run(self, config: SolverConfig, lower=None, upper=None, method="highs-ds"):
        options = {
            "primal_feasibility_tolerance": config.feasibility_tol,
            "dual_feasibility_tolerance": config.optimality_tol,
            "presolve": False,
        }
        if method == "highs-ipm":
            options = {"primal_feasibility_tolerance": config.feasibility_tol,
                       "dual_feasibility_tolerance": config.optimality_tol}
        return linprog(
            self.c,
            A_ub=self.A_ub,
            b_ub=self.b_ub,
            A_eq=self.A_eq,
            b_eq=self.b_eq,
            bounds=self.bounds(lower, upper),
            method=method,
            options=options,
        )

    def solution(self, res) -> LpSolution:
        model = self.model
        duals: dict[str, float] = {}
        if len(self.ub_rows):
            for i, m in zip(self.ub_rows, res.ineqlin.marginals):
                duals[model.con_names[i]] = -float(m)
        if len(self.eq_rows):
            for i, m in zip(self.eq_rows, res.eqlin.marginals):
                duals[model.con_names[i]] = -float(m)
        rc = np.asarray(res.lower.marginals) + np.asarray(res.upper.marginals)
        return LpSolution(
            status=OPTIMAL,
            x=np.asarray(res.x, dtype=float),
            objective=float(res.fun) + model.objective_offset,
            duals=duals,
            reduced_costs=rc,
            var_index=model._var_index,
        )


def solve_lp(model: LinearModel, config: SolverConfig = DEFAULT_CONFIG) -> LpSolution:
    """Solve the continuous relaxation of ``model``.

    Returns an optimal primal/dual pair, or an infeasible/unbounded status with
    a Farkas certificate or an improving ray respectively.

    Raises:
        NumericalInstabilityError: if both the simplex and the interior-point
            fallback report numerical trouble.
    """
    compiled = _Compiled(model)
    return _solve_compiled(compiled, config)


def _solve_compiled(
    compiled: _Compiled, config: SolverConfig, lower=None, upper=None, certificates: bool = True
) -> LpSolution:
    res = compiled.run(config, lower, upper)
    if res.status == 4 or (res.status == 0 and res.x is None):
        res = compiled.run(config, lower, upper, method="highs-ipm")
        if res.status == 4:
            raise NumericalInstabilityError(
                f"{compiled.model.name}: LP backend reported numerical difficulties"
            )
    if res.status == 0:
        return compiled.solution(res)
    if res.status == 2:
        return LpSolution(
            status=INFEASIBLE,
            farkas=_farkas(compiled, config, lower, upper) if certificates else None,
            var_index=compiled.model._var_index,
        )
    if res.status == 3:
        return LpSolution(
            status=UNBOUNDED,
            ray=_ray(compiled, config, lower, upper) if certificates else None,
            var_index=compiled.model._var_index,
        )
    raise NumericalInstabilityError(f"{compiled.model.name}: solver status {res.status}: {res.message}")


def _ray(compiled: _Compiled, config, lower=None, upper=None) -> np.ndarray | None:
    """Direction d in the recession cone with c.d = -1."""
    model = compiled.model
    lo = compiled.lower if lower is None else lower
    hi = compiled.upper if upper is None else upper
    n = model.num_vars
    ray_model = LinearModel(model.name + ":ray")
    for j in range(n):
        dlo = 0.0 if np.isfinite(lo[j]) else -1.0
        dhi = 0.0 if np.isfinite(hi[j]) else 1.0
        ray_model.add_var(f"d{j}", dlo, dhi)
    for i, row in enumerate(model.rows):
        ray_model.add_constraint(f"r{i}", row, model.senses[i], 0.0)
    ray_model.add_constraint("cost", dict(enumerate(model.cost)), EQ, -1.0)
    res = _Compiled(ray_model).run(config)
    return None if res.status != 0 else np.asarray(res.x)


def _farkas(compiled: _Compiled, config, lower=None, upper=None) -> dict[str, float] | None:
    """Phase-one multipliers: duals of the elastic feasibility problem."""
    model = compiled.model
    lo = compiled.lower if lower is None else lower
    hi = compiled.upper if upper is None else upper
    elastic = LinearModel(model.name + ":phase1")
    for j in range(model.num_vars):
        elastic.add_var(f"x{j}", lo[j], hi[j])
    for i, row in enumerate(model.rows):
        coeffs = dict(row)
        sense = model.senses[i]
        if sense in (LE, EQ):
            coeffs[elastic.add_var(f"sm{i}", 0.0, INF, 1.0)] = -1.0
        if sense in (GE, EQ):
            coeffs[elastic.add_var(f"sp{i}", 0.0, INF, 1.0)] = 1.0
        elastic.add_constraint(model.con_names[i], coeffs, sense, model.rhs[i])
    sol = _solve_compiled(_Compiled(elastic), config)
    return sol.duals if sol.status == OPTIMAL else None


def solve_mip(
    model: LinearModel,
    binaries: Iterable[str | int],
    config: SolverConfig = DEFAULT_CONFIG,
) -> MipSolution:
    """Branch-and-bound over LP relaxations for a mixed-binary model.

    Nodes are explored best-bound first (ties by creation order); the branching
    variable is the most fractional binary, ties broken by lowest index.
    """
    compiled = _Compiled(model)
    bin_idx = np.array(sorted({model._resolve(b) for b in binaries}), dtype=int)
    for j in bin_idx:
        if compiled.lower[j] < 0.0 or compiled.upper[j] > 1.0:
            raise ModelError(f"binary {model.var_names[j]!r} must have bounds within [0, 1]")
    lower0 = compiled.lower.copy()
    upper0 = compiled.upper.copy()
    lower0[bin_idx] = np.ceil(lower0[bin_idx] - config.integrality_tol)
    upper0[bin_idx] = np.floor(upper0[bin_idx] + config.integrality_tol)

    root = _solve_compiled(compiled, config, lower0, upper0)
    if root.status != OPTIMAL:
        return MipSolution(status=root.status, nodes=1, var_index=model._var_index)

    incumbent: np.ndarray | None = None
    inc_obj = math.inf
    counter = 0
    heap: list[tuple[float, int, np.ndarray, np.ndarray, LpSolution]] = [
        (root.objective, counter, lower0, upper0, root)
    ]
    nodes = 1
    best_bound = root.objective

    def closed(bound: float) -> bool:
        return bound >= inc_obj - config.mip_gap * max(1.0, abs(inc_obj))

    while heap:
        bound, _, lo, hi, sol = heapq.heappop(heap)
        best_bound = bound
        if closed(bound):
            best_bound = min(bound, inc_obj)
            heap.clear()
            break
        xb = sol.x[bin_idx]
        frac = np.abs(xb - np.round(xb))
        if len(bin_idx) == 0 or frac.max() <= config.integrality_tol:
            if sol.objective < inc_obj:
                inc_obj = sol.objective
                incumbent = sol.x.copy()
                incumbent[bin_idx] = np.round(incumbent[bin_idx])
            continue
        if nodes >= config.max_nodes:
            heapq.heappush(heap, (bound, counter, lo, hi, sol))
            break
        k = int(np.argmin(np.abs(frac - 0.5)))
        j = bin_idx[k]
        for fix in (0.0, 1.0):
            clo, chi = lo.copy(), hi.copy()
            clo[j] = chi[j] = fix
            child = _solve_compiled(compiled, config, clo, chi, certificates=False)
            nodes += 1
            if child.status != OPTIMAL:
                continue
            if incumbent is not None and closed(child.objective):
                continue
            counter += 1
            heapq.heappush(heap, (child.objective, counter, clo, chi, child))

    if heap:
        best_bound = min(best_bound, min(h[0] for h in heap))
    elif incumbent is not None:
        best_bound = min(best_bound, inc_obj)
    if incumbent is None:
        status = LIMIT if heap else INFEASIBLE
        return MipSolution(status=status, bound=best_bound, nodes=nodes, var_index=model._var_index)
    gap = (inc_obj - best_bound) / max(1.0, abs(inc_obj))
    status = OPTIMAL if gap <= config.mip_gap + 1e-12 else LIMIT
    return MipSolution(
        status=status,
        x=incumbent,
        objective=inc_obj,
        bound=best_bound,
        gap=max(gap, 0.0),
        nodes=nodes,
        var_index=model._var_index,
    )


def check_lp_optimality(model: LinearModel, sol: LpSolution) -> dict[str, float]:
    """Residuals of the KKT system for an optimal solution.

    Returns the maximal primal infeasibility, dual infeasibility, complementary
    slackness violation, and the relative primal/dual objective gap.
    """
    A = model.matrix()
    x = sol.x
    ax = A @ x
    rhs = np.array(model.rhs)
    senses = model.senses
    lo = np.array(model.lower)
    hi = np.array(model.upper)

    primal = 0.0
    for i, s in enumerate(senses):
        if s == LE:
            primal = max(primal, ax[i] - rhs[i])
        elif s == GE:
            primal = max(primal, rhs[i] - ax[i])
        else:
            primal = max(primal, abs(ax[i] - rhs[i]))
    primal = max(primal, float(np.max(lo - x, initial=0.0)), float(np.max(x - hi, initial=0.0)))

    # y in <=-form: y_le >= 0 multiplies (a x - b), ge rows multiply (b - a x)
    y = np.array([sol.duals[n] for n in model.con_names])
    sgn = np.array([-1.0 if s == GE else 1.0 for s in senses])
    yrow = y * sgn
    rc = np.array(model.cost) + A.T @ yrow
    dual_inf = 0.0
    for i, s in enumerate(senses):
        if s != EQ:
            dual_inf = max(dual_inf, -y[i])
    comp = 0.0
    dual_obj = model.objective_offset - float(yrow @ rhs)
    for j in range(model.num_vars):
        r = rc[j]
        if r > 0:
            if np.isfinite(lo[j]):
                comp = max(comp, r * (x[j] - lo[j]))
                dual_obj += r * lo[j]
            else:
                dual_inf = max(dual_inf, r)
        elif r < 0:
            if np.isfinite(hi[j]):
                comp = max(comp, -r * (hi[j] - x[j]))
                dual_obj += r * hi[j]
            else:
                dual_inf = max(dual_inf, -r)
    for i, s in enumerate(senses):
        slack = abs(ax[i] - rhs[i])
        if s != EQ:
            comp = max(comp, abs(y[i]) * slack)
    primal_obj = float(np.dot(model.cost, x)) + model.objective_offset
    gap = abs(primal_obj - dual_obj) / max(1.0, abs(primal_obj))
    return {"primal": primal, "dual": dual_inf, "complementarity": comp, "gap": gap}


def write_lp(model: LinearModel, path) -> None:
    """Dump ``model`` in CPLEX LP text format, preserving names."""

    def term(c: float, name: str, first: bool) -> str:
        sign = "-" if c < 0 else ("" if first else "+")
        return f"{sign} {abs(c):.17g} {name}" if not first or c < 0 else f"{abs(c):.17g} {name}"

    lines = [f"\\ {model.name}", "Minimize", " obj:"]
    obj_terms = [
        term(c, model.var_names[j], i == 0)
        for i, (j, c) in enumerate((j, c) for j, c in enumerate(model.cost) if c != 0.0)
    ]
    if model.objective_offset:
        obj_terms.append(f"{'+' if model.objective_offset >= 0 else '-'} {abs(model.objective_offset):.17g}")
    lines.append("  " + (" ".join(obj_terms) if obj_terms else "0 " + model.var_names[0]))
    lines.append("Subject To")
    for name, row, sense, rhs in zip(model.con_names, model.rows, model.senses, model.rhs):
        items = sorted(row.items())
        body = " ".join(term(c, model.var_names[j], k == 0) for k, (j, c) in enumerate(items))
        lines.append(f" {name}: {body or '0 ' + model.var_names[0]} {sense} {rhs:.17g}")
    lines.append("Bounds")
    for name, lo, hi in zip(model.var_names, model.lower, model.upper):
        if np.isneginf(lo) and np.isposinf(hi):
            lines.append(f" {name} free")
        else:
            lo_s = "-inf" if np.isneginf(lo) else f"{lo:.17g}"
            hi_s = "+inf" if np.isposinf(hi) else f"{hi:.17g}"
            lines.append(f" {lo_s} <= {name} <= {hi_s}")
    lines.append("End")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
