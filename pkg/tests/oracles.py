"""Reference computations that share no code with the package solvers.

* a dense two-phase tableau simplex (Bland's rule) for small LPs,
* the vertices of a budgeted ambiguity set by direct enumeration,
* worst-case CVaR as a minimax over those vertices,
* the optimal value as a function of the threshold, minimized over a grid.
"""

from __future__ import annotations

from itertools import combinations, product

import numpy as np
from scipy.optimize import linprog

TOL = 1e-10


def tableau_simplex(c, A_eq, b_eq, max_iter=10_000):
    """min c.x s.t. A_eq x = b_eq, x >= 0. Returns (status, value, x)."""
    A = np.array(A_eq, dtype=float)
    b = np.array(b_eq, dtype=float)
    c = np.array(c, dtype=float)
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    # phase one with one artificial per row
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    basis = list(range(n, n + m))
    T[m, :n] = -A.sum(axis=0)
    T[m, -1] = -b.sum()

    def pivot(r, j):
        T[r] /= T[r, j]
        for i in range(T.shape[0]):
            if i != r and abs(T[i, j]) > 0:
                T[i] -= T[i, j] * T[r]
        basis[r] = j

    def run(cols):
        for _ in range(max_iter):
            enter = next((j for j in cols if T[-1, j] < -TOL), None)
            if enter is None:
                return "optimal"
            ratios = [
                (T[i, -1] / T[i, enter], basis[i], i) for i in range(m) if T[i, enter] > TOL
            ]
            if not ratios:
                return "unbounded"
            _, _, r = min(ratios)
            pivot(r, enter)
        raise RuntimeError("simplex iteration limit")

    run(range(n + m))
    if T[m, -1] < -1e-8:
        return "infeasible", None, None
    # drive artificials out of the basis
    for r in range(m):
        if basis[r] >= n:
            j = next((j for j in range(n) if abs(T[r, j]) > 1e-9), None)
            if j is not None:
                pivot(r, j)
    keep = [r for r in range(m) if basis[r] < n]
    T = np.vstack([T[keep][:, list(range(n)) + [-1]], np.zeros(n + 1)])
    basis[:] = [basis[r] for r in keep]
    m = len(keep)
    T[-1, :n] = c
    for i, j in enumerate(basis):
        T[-1] -= T[-1, j] * T[i]
    status = run(range(n))
    x = np.zeros(n)
    for i, j in enumerate(basis):
        x[j] = T[i, -1]
    return status, float(c @ x), x


def model_value_by_tableau(model) -> float:
    """Optimal value of a package LinearModel, rebuilt in standard form."""
    cols = []  # (var index, sign, shift) per standard-form column
    rows, rhs = [], []
    n = model.num_vars
    shift = np.zeros(n)
    col_of: dict[int, list[tuple[int, float]]] = {}
    extra_rows = []
    for j in range(n):
        lo, hi = model.lower[j], model.upper[j]
        if np.isfinite(lo):
            shift[j] = lo
            col_of[j] = [(len(cols), 1.0)]
            cols.append(j)
            if np.isfinite(hi):
                extra_rows.append((j, hi - lo))
        elif np.isfinite(hi):
            shift[j] = hi
            col_of[j] = [(len(cols), -1.0)]
            cols.append(j)
        else:
            col_of[j] = [(len(cols), 1.0), (len(cols) + 1, -1.0)]
            cols.extend([j, j])
    slack_count = sum(s != "=" for s in model.senses) + len(extra_rows)
    width = len(cols) + slack_count
    c = np.zeros(width)
    for j in range(n):
        for col, sign in col_of[j]:
            c[col] = model.cost[j] * sign
    offset = float(np.dot(model.cost, shift)) + model.objective_offset
    slack = len(cols)
    for row, sense, b in zip(model.rows, model.senses, model.rhs):
        a = np.zeros(width)
        b = b - sum(v * shift[j] for j, v in row.items())
        for j, v in row.items():
            for col, sign in col_of[j]:
                a[col] += v * sign
        if sense == "<=":
            a[slack] = 1.0
            slack += 1
        elif sense == ">=":
            a[slack] = -1.0
            slack += 1
        rows.append(a)
        rhs.append(b)
    for j, width_j in extra_rows:
        a = np.zeros(width)
        a[col_of[j][0][0]] = 1.0
        a[slack] = 1.0
        slack += 1
        rows.append(a)
        rhs.append(width_j)
    status, value, _ = tableau_simplex(c, np.array(rows), np.array(rhs))
    if status != "optimal":
        raise RuntimeError(status)
    return value + offset


def budgeted_vertices(q_hat, q_bar, gamma) -> np.ndarray:
    """Vertices of {q in simplex : |q - q_hat| <= q_bar,
    sum |q - q_hat|/q_bar <= gamma}.

    At a vertex every coordinate sits at a breakpoint (its lower bound, upper
    bound or reference value) except at most two, which are pinned by
    ``sum q = 1`` and, for the second, by the budget holding with equality.
    Candidates are generated that way and kept when their active constraints
    have full rank.
    """
    q_hat = np.asarray(q_hat, float)
    q_bar = np.asarray(q_bar, float)
    K = len(q_hat)
    lo = np.maximum(q_hat - q_bar, 0.0)
    hi = q_hat + q_bar
    levels = np.stack([lo, hi, q_hat], axis=1)
    safe_bar = np.where(q_bar > 0, q_bar, 1.0)

    def feasible(Q):
        dev = np.where(q_bar > 0, np.abs(Q - q_hat) / safe_bar, 0.0).sum(axis=1)
        return (
            (np.abs(Q.sum(axis=1) - 1) <= 1e-9)
            & np.all(Q >= lo - 1e-9, axis=1)
            & np.all(Q <= hi + 1e-9, axis=1)
            & (dev <= gamma + 1e-9)
        )

    def fixed_part(others):
        picks = np.array(list(product(range(3), repeat=len(others))), dtype=int)
        Q = np.empty((len(picks), K))
        if others:
            Q[:, others] = levels[others][np.arange(len(others)), picks]
        return Q

    found = []
    for free in range(K):
        others = [k for k in range(K) if k != free]
        Q = fixed_part(others)
        Q[:, free] = 1.0 - Q[:, others].sum(axis=1)
        found.append(Q[feasible(Q)])
    for a, b in combinations(range(K), 2):
        if q_bar[a] == 0 or q_bar[b] == 0:
            continue
        others = [k for k in range(K) if k not in (a, b)]
        base = fixed_part(others)
        used = (np.abs(base[:, others] - q_hat[others]) / safe_bar[others]).sum(axis=1)
        rest = gamma - used
        total = 1.0 - base[:, others].sum(axis=1)
        for sa, sb in product((1.0, -1.0), repeat=2):
            # q_a + q_b = total and sa (q_a - qh_a)/qb_a + sb (q_b - qh_b)/qb_b = rest
            ca, cb = sa / q_bar[a], sb / q_bar[b]
            if abs(cb - ca) < 1e-12:
                continue
            r = rest + ca * q_hat[a] + cb * q_hat[b]
            qa = (cb * total - r) / (cb - ca)
            qb = total - qa
            Q = base.copy()
            Q[:, a], Q[:, b] = qa, qb
            ok = feasible(Q) & (sa * (qa - q_hat[a]) >= -1e-12) & (sb * (qb - q_hat[b]) >= -1e-12)
            found.append(Q[ok])
    cand = np.unique(np.round(np.vstack(found), 12), axis=0) + 0.0
    return np.array([q for q in cand if _is_vertex(q, q_hat, q_bar, lo, hi, gamma)])


def _is_vertex(q, q_hat, q_bar, lo, hi, gamma, tol=1e-9) -> bool:
    """Active constraint normals span the whole space."""
    K = len(q)
    rows = [np.ones(K)]
    for k in range(K):
        if abs(q[k] - lo[k]) <= tol or abs(q[k] - hi[k]) <= tol:
            rows.append(np.eye(K)[k])
    active = q_bar > 0
    used = (np.abs(q - q_hat)[active] / q_bar[active]).sum()
    if used >= gamma - tol:
        # the budget is a max of linear pieces; at a kink every piece is active
        at_ref = np.abs(q - q_hat) <= tol
        sign = np.where(at_ref, 0.0, np.sign(q - q_hat))
        rows.append(np.where(active, sign / np.where(active, q_bar, 1.0), 0.0))
        rows.extend(np.eye(K)[k] for k in range(K) if at_ref[k] and active[k])
    return np.linalg.matrix_rank(np.array(rows), tol=1e-9) == K


def cvar_by_definition(values, probs, alpha) -> float:
    """min over support points of zeta + E[(X - zeta)^+]/(1 - alpha)."""
    v = np.asarray(values, float)
    p = np.asarray(probs, float)
    return min(z + p @ np.maximum(v - z, 0.0) / (1 - alpha) for z in v)


def _tail_matrix(flows, zeta, alpha):
    return np.maximum(flows - zeta, 0.0) / (1 - alpha)


def minimax_worst_case_cvar(flows, probs, vertices, alpha, iters=300) -> float:
    """min over zeta of max over vertices of the CVaR objective, by ternary
    search on the (convex) envelope."""
    flows = np.atleast_2d(flows)
    probs = np.asarray(probs, float)

    def h(z):
        return z + np.max(vertices @ (probs @ _tail_matrix(flows, z, alpha)))

    a, b = 0.0, float(flows.max())
    for _ in range(iters):
        m1, m2 = a + (b - a) / 3, b - (b - a) / 3
        if h(m1) <= h(m2):
            b = m2
        else:
            a = m1
    return min(h(a), h(b), h(0.0), h(float(flows.max())))


def max_over_vertices_cvar(flows, probs, vertices, alpha) -> float:
    """max over vertices q of CVaR under the joint (plan, scenario) law."""
    flows = np.atleast_2d(flows)
    probs = np.asarray(probs, float)
    return max(
        cvar_by_definition(flows.ravel(), np.outer(probs, q).ravel(), alpha) for q in vertices
    )


def threshold_value(flows, vertices, zeta, alpha) -> float:
    """Best mixed strategy for a fixed threshold, as a matrix game."""
    A = _tail_matrix(flows, zeta, alpha) @ vertices.T  # plans x vertices
    n, V = A.shape
    # min s  s.t.  A^T u <= s, sum u = 1, u >= 0
    c = np.zeros(n + 1)
    c[-1] = 1.0
    A_ub = np.hstack([A.T, -np.ones((V, 1))])
    A_eq = np.hstack([np.ones((1, n)), np.zeros((1, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(V), A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, None)] * n + [(None, None)], method="highs")
    assert res.status == 0, res.message
    return zeta + res.fun


def zeta_grid_optimum(flows, vertices, alpha, zeta_max, points=10_000, refine=10, fine=200):
    """Grid search of the threshold over [0, zeta_max], then a finer grid
    around the best cells. Returns (value, zeta)."""
    grid = np.linspace(0.0, zeta_max, points)
    vals = np.array([threshold_value(flows, vertices, z, alpha) for z in grid])
    best_v, best_z = float(vals.min()), float(grid[vals.argmin()])
    h = grid[1] - grid[0]
    for i in np.argsort(vals)[:refine]:
        for z in np.linspace(max(0.0, grid[i] - h), min(zeta_max, grid[i] + h), fine):
            v = threshold_value(flows, vertices, z, alpha)
            if v < best_v:
                best_v, best_z = v, float(z)
    return best_v, best_z
