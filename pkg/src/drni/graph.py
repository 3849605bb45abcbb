"""Networks, grid instances and the flow player's max-flow problem."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

ATOL = 1e-9
# residual capacities below this are treated as saturated
_RESIDUAL_EPS = 1e-12
# networks with at most this many inner nodes are batch-evaluated by listing cuts
CUT_ENUMERATION_LIMIT = 10
_CUT_CHUNK = 2048

Plan = tuple[int, ...]


class ContractError(ValueError):
    """Raised when an input violates a documented precondition."""


@dataclass(frozen=True)
class Network:
    """Directed s-t network with an ordered arc list.

    Parallel arcs are allowed. Arcs may not leave the sink: the flow player's
    objective counts flow entering the sink, and an arc out of it would let
    flow be recycled through the sink.
    """

    node_count: int
    source: int
    sink: int
    arcs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "arcs", tuple((int(a), int(b)) for a, b in self.arcs))
        n = self.node_count
        if n < 2:
            raise ContractError("a network needs at least two nodes")
        if not (0 <= self.source < n and 0 <= self.sink < n):
            raise ContractError("source/sink out of range")
        if self.source == self.sink:
            raise ContractError("source and sink must differ")
        for e, (i, j) in enumerate(self.arcs):
            if not (0 <= i < n and 0 <= j < n):
                raise ContractError(f"arc {e}=({i},{j}) references an unknown node")
            if i == j:
                raise ContractError(f"arc {e} is a self-loop")
            if i == self.sink:
                raise ContractError(f"arc {e} leaves the sink")

    @property
    def arc_count(self) -> int:
        return len(self.arcs)

    @cached_property
    def inner_nodes(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.node_count) if i not in (self.source, self.sink))

    @cached_property
    def incidence(self) -> dict[int, dict[int, float]]:
        """Sparse conservation matrix: row per non-terminal node, +1 on arcs
        leaving it and -1 on arcs entering it."""
        rows: dict[int, dict[int, float]] = {i: {} for i in self.inner_nodes}
        for e, (i, j) in enumerate(self.arcs):
            if i in rows:
                rows[i][e] = rows[i].get(e, 0.0) + 1.0
            if j in rows:
                rows[j][e] = rows[j].get(e, 0.0) - 1.0
        return rows

    @cached_property
    def sink_indicator(self) -> np.ndarray:
        return np.array([1.0 if j == self.sink else 0.0 for _, j in self.arcs])

    @cached_property
    def _out_arcs(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in range(self.node_count)]
        for e, (i, _) in enumerate(self.arcs):
            out[i].append(e)
        return tuple(tuple(a) for a in out)

    @cached_property
    def _in_arcs(self) -> tuple[tuple[int, ...], ...]:
        inc: list[list[int]] = [[] for _ in range(self.node_count)]
        for e, (_, j) in enumerate(self.arcs):
            inc[j].append(e)
        return tuple(tuple(a) for a in inc)

    @cached_property
    def cut_matrix(self) -> np.ndarray:
        """Indicator of the arcs crossing each s-t cut, one row per subset of
        inner nodes placed on the source side."""
        inner = self.inner_nodes
        masks = np.arange(2 ** len(inner))[:, None]
        side = np.zeros((len(masks), self.node_count), dtype=bool)
        side[:, self.source] = True
        side[:, list(inner)] = (masks >> np.arange(len(inner))) & 1 == 1
        tails = np.array([a[0] for a in self.arcs], dtype=int)
        heads = np.array([a[1] for a in self.arcs], dtype=int)
        return (side[:, tails] & ~side[:, heads]).astype(float)

    def source_arcs(self) -> tuple[int, ...]:
        return self._out_arcs[self.source]

    def to_dict(self) -> dict:
        return {
            "nodes": self.node_count,
            "source": self.source,
            "sink": self.sink,
            "arcs": [list(a) for a in self.arcs],
        }


@dataclass(frozen=True)
class MaxFlowResult:
    value: float
    flow: np.ndarray
    # lam[e] = 1 on arcs crossing the minimum cut; potentials are 0 on the
    # source side and 1 on the sink side (source fixed at 0, sink at 1)
    lam: np.ndarray
    potentials: np.ndarray
    source_side: frozenset[int] = field(default_factory=frozenset)

    def cut_value(self, capacities: np.ndarray, plan: Iterable[int] = ()) -> float:
        keep = np.ones(len(capacities))
        keep[list(plan)] = 0.0
        return float(np.dot(keep * capacities, self.lam))


def as_plan(arcs: Iterable[int]) -> Plan:
    return tuple(sorted({int(a) for a in arcs}))


def plan_indicator(plan: Iterable[int], arc_count: int) -> np.ndarray:
    ind = np.zeros(arc_count)
    ind[list(plan)] = 1.0
    return ind


def max_flow(net: Network, cap: Sequence[float], plan: Iterable[int] = ()) -> MaxFlowResult:
    """Maximum s-t flow with interdicted arcs removed (Edmonds-Karp).

    Returns the flow together with the minimum-cut dual certificate: ``lam`` is
    1 on arcs leaving the source side of the cut, and ``potentials`` are the
    node multipliers of the conservation rows (0 on the source side, 1 on the
    sink side), which satisfy ``lam + N^T potentials - d >= 0``.
    """
    cap = np.asarray(cap, dtype=float)
    if cap.shape != (net.arc_count,):
        raise ContractError(f"capacity vector has shape {cap.shape}, expected ({net.arc_count},)")
    if np.any(cap < -ATOL):
        raise ContractError("capacities must be nonnegative")
    plan = list(plan)
    for e in plan:
        if not 0 <= e < net.arc_count:
            raise ContractError(f"interdicted arc {e} out of range")
    eff = np.maximum(cap, 0.0)
    eff[plan] = 0.0

    flow = np.zeros(net.arc_count)
    s, t = net.source, net.sink
    out_arcs, in_arcs, arcs = net._out_arcs, net._in_arcs, net.arcs

    while True:
        # BFS on the residual graph; pred[v] = (arc, +1 forward / -1 backward)
        pred: dict[int, tuple[int, int]] = {s: (-1, 0)}
        queue = deque([s])
        while queue and t not in pred:
            v = queue.popleft()
            for e in out_arcs[v]:
                w = arcs[e][1]
                if w not in pred and eff[e] - flow[e] > _RESIDUAL_EPS:
                    pred[w] = (e, 1)
                    queue.append(w)
            for e in in_arcs[v]:
                w = arcs[e][0]
                if w not in pred and flow[e] > _RESIDUAL_EPS:
                    pred[w] = (e, -1)
                    queue.append(w)
        if t not in pred:
            break
        path = []
        v = t
        while v != s:
            e, d = pred[v]
            path.append((e, d))
            v = arcs[e][0] if d == 1 else arcs[e][1]
        bottleneck = min(eff[e] - flow[e] if d == 1 else flow[e] for e, d in path)
        for e, d in path:
            flow[e] += bottleneck * d

    source_side = frozenset(pred)
    lam = np.array(
        [1.0 if (i in source_side and j not in source_side) else 0.0 for i, j in arcs]
    )
    potentials = np.array([0.0 if v in source_side else 1.0 for v in range(net.node_count)])
    value = float(sum(flow[e] for e in in_arcs[t]))
    return MaxFlowResult(value, flow, lam, potentials, source_side)


def flow_value(net: Network, cap: Sequence[float], plan: Iterable[int] = ()) -> float:
    return max_flow(net, cap, plan).value


def max_flow_values(net: Network, scenarios, plan: Iterable[int] = ()) -> np.ndarray:
    """Max-flow value of ``plan`` for every row of ``scenarios``.

    Small networks are evaluated as the cheapest of all s-t cuts, in bulk;
    larger ones fall back to augmenting paths per scenario.
    """
    scenarios = np.atleast_2d(np.asarray(scenarios, dtype=float))
    if scenarios.shape[1] != net.arc_count:
        raise ContractError("scenario capacity vectors must have one entry per arc")
    plan = list(plan)
    if len(net.inner_nodes) > CUT_ENUMERATION_LIMIT:
        return np.array([max_flow(net, c, plan).value for c in scenarios])
    if np.any(scenarios < -ATOL):
        raise ContractError("capacities must be nonnegative")
    for e in plan:
        if not 0 <= e < net.arc_count:
            raise ContractError(f"interdicted arc {e} out of range")
    caps = np.maximum(scenarios, 0.0)
    caps[:, plan] = 0.0
    cuts = net.cut_matrix.T
    out = np.empty(len(caps))
    for lo in range(0, len(caps), _CUT_CHUNK):
        out[lo:lo + _CUT_CHUNK] = (caps[lo:lo + _CUT_CHUNK] @ cuts).min(axis=1)
    return out


def flow_matrix(net: Network, scenarios: np.ndarray, plans: Sequence[Plan]) -> np.ndarray:
    """``F[i, k]`` = max flow of plan ``plans[i]`` in scenario ``k``."""
    scenarios = np.atleast_2d(np.asarray(scenarios, dtype=float))
    return np.array([max_flow_values(net, scenarios, p) for p in plans]).reshape(
        len(plans), len(scenarios)
    )


def zeta_bar(net: Network, scenarios: np.ndarray) -> float:
    """Largest uninterdicted max-flow over the scenarios."""
    scenarios = np.asarray(scenarios, dtype=float)
    if scenarios.ndim != 2 or scenarios.shape[0] == 0:
        raise ContractError("zeta_bar needs a nonempty (K, |E|) scenario array")
    return float(max_flow_values(net, scenarios).max())


def grid_node(row: int, col: int, rows: int) -> int:
    """Node id of grid cell (row, col); the source is 0 and the sink is rows*cols+1."""
    return 1 + col * rows + row


def generate_grid(rows: int, cols: int, rng_seed: int | np.random.Generator | None = 0) -> Network:
    """Layered grid instance.

    The source feeds every node of the first column and every node of the last
    column feeds the sink. Same-row nodes of adjacent columns are joined toward
    the sink; vertically adjacent nodes of a column get a single arc pointing up
    or down by a fair coin flip. Arcs are ordered source arcs first, then for
    each column its vertical arcs (top to bottom) followed by its horizontal
    arcs, and finally the sink arcs.
    """
    if rows < 1 or cols < 1:
        raise ContractError("grid dimensions must be positive")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    source, sink = 0, rows * cols + 1
    arcs: list[tuple[int, int]] = [(source, grid_node(r, 0, rows)) for r in range(rows)]
    for c in range(cols):
        for r in range(rows - 1):
            upper, lower = grid_node(r, c, rows), grid_node(r + 1, c, rows)
            arcs.append((lower, upper) if rng.random() < 0.5 else (upper, lower))
        if c + 1 < cols:
            arcs.extend((grid_node(r, c, rows), grid_node(r, c + 1, rows)) for r in range(rows))
    arcs.extend((grid_node(r, cols - 1, rows), sink) for r in range(rows))
    return Network(rows * cols + 2, source, sink, tuple(arcs))


def reference_grid() -> Network:
    """The fixed 4x2 grid used for the randomized-vs-deterministic study, with
    arcs numbered as in its drawing (source arcs first, sink arcs last)."""
    arcs = (
        (0, 1), (0, 2), (0, 3), (0, 4),
        (2, 1), (3, 2), (4, 3),
        (1, 5), (2, 6), (3, 7), (4, 8),
        (6, 5), (7, 6), (7, 8),
        (5, 9), (6, 9), (7, 9), (8, 9),
    )
    return Network(10, 0, 9, arcs)


def grid_arc_count(rows: int, cols: int) -> int:
    return 2 * rows + rows * (cols - 1) + (rows - 1) * cols


def enumerate_plans(arc_count: int, budget: int, cap: int | None = None) -> list[Plan]:
    """All plans with at most ``budget`` interdicted arcs, in lexicographic order."""
    from itertools import combinations
    from math import comb

    budget = min(int(budget), arc_count)
    total = sum(comb(arc_count, r) for r in range(budget + 1))
    if cap is not None and total > cap:
        raise ContractError(f"{total} plans exceed the enumeration cap {cap}")
    plans = [p for r in range(budget + 1) for p in combinations(range(arc_count), r)]
    return sorted(plans)


def river_crossing(tau: float = 3.0, eps: float = 2.5, delta: float = 1.5) -> tuple[Network, np.ndarray]:
    """Three parallel s-t routes (tunnel T1, tunnel T2, bridge B) and the four
    congestion scenarios of the river-crossing example.

    Arc order is (T1, T2, B).
    """
    net = Network(2, 0, 1, ((0, 1), (0, 1), (0, 1)))
    scenarios = np.array(
        [
            [tau - delta, tau, eps - delta],
            [tau, tau - delta, eps - delta],
            [tau - delta, tau, eps],
            [tau, tau - delta, eps],
        ]
    )
    return net, scenarios
