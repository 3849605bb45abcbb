import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drni.graph import (
    ContractError,
    Network,
    enumerate_plans,
    flow_matrix,
    generate_grid,
    grid_arc_count,
    max_flow,
    max_flow_values,
    reference_grid,
    river_crossing,
    zeta_bar,
)


def nx_value(net, cap, plan=()):
    g = nx.DiGraph()
    g.add_nodes_from(range(net.node_count))
    for e, (a, b) in enumerate(net.arcs):
        c = 0.0 if e in plan else float(cap[e])
        if g.has_edge(a, b):
            g[a][b]["capacity"] += c
        else:
            g.add_edge(a, b, capacity=c)
    return nx.maximum_flow_value(g, net.source, net.sink)


@pytest.mark.parametrize(
    "nodes,s,t,arcs",
    [
        (1, 0, 0, ()),
        (3, 0, 0, ((0, 1),)),
        (3, 0, 5, ((0, 1),)),
        (3, 0, 2, ((0, 7),)),
        (3, 0, 2, ((1, 1),)),
        (3, 0, 2, ((2, 1),)),
    ],
)
def test_invalid_networks(nodes, s, t, arcs):
    with pytest.raises(ContractError):
        Network(nodes, s, t, arcs)


def test_bad_capacities_and_plans():
    net, sc = river_crossing()
    with pytest.raises(ContractError):
        max_flow(net, [1.0, 2.0])
    with pytest.raises(ContractError):
        max_flow(net, [1.0, -1.0, 1.0])
    with pytest.raises(ContractError):
        max_flow(net, sc[0], plan=[5])
    with pytest.raises(ContractError):
        max_flow_values(net, sc[:, :2])


def test_river_crossing_flows():
    net, sc = river_crossing(3.0, 2.5, 1.5)
    assert sc.shape == (4, 3)
    assert max_flow_values(net, sc, (0, 1)).tolist() == [1.0, 1.0, 2.5, 2.5]
    assert max_flow_values(net, sc, (0, 2)).tolist() == [3.0, 1.5, 3.0, 1.5]
    assert max_flow_values(net, sc).tolist() == [5.5, 5.5, 7.0, 7.0]
    assert zeta_bar(net, sc) == 7.0


def test_parallel_arcs_add_up():
    net = Network(3, 0, 2, ((0, 1), (0, 1), (1, 2)))
    assert max_flow(net, [1.0, 2.0, 10.0]).value == pytest.approx(3.0)
    assert max_flow(net, [1.0, 2.0, 10.0], [1]).value == pytest.approx(1.0)


def test_disconnected_sink_has_zero_flow():
    net = Network(4, 0, 3, ((0, 1), (2, 3)))
    res = max_flow(net, [5.0, 5.0])
    assert res.value == 0.0
    assert res.cut_value(np.array([5.0, 5.0])) == 0.0


@settings(max_examples=60, deadline=None)
@given(
    rows=st.integers(1, 4),
    cols=st.integers(1, 3),
    seed=st.integers(0, 10_000),
    budget=st.integers(0, 3),
)
def test_max_flow_matches_networkx(rows, cols, seed, budget):
    net = generate_grid(rows, cols, seed)
    rng = np.random.default_rng(seed)
    cap = rng.uniform(0, 5, net.arc_count) * (rng.random(net.arc_count) < 0.9)
    plan = tuple(rng.choice(net.arc_count, min(budget, net.arc_count), replace=False))
    res = max_flow(net, cap, plan)
    assert res.value == pytest.approx(nx_value(net, cap, plan), abs=1e-9)
    # the flow is feasible
    eff = cap.copy()
    eff[list(plan)] = 0.0
    assert np.all(res.flow >= -1e-12) and np.all(res.flow <= eff + 1e-9)
    for v, row in net.incidence.items():
        assert sum(c * res.flow[e] for e, c in row.items()) == pytest.approx(0.0, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), budget=st.integers(0, 2))
def test_cut_enumeration_matches_augmenting_paths(seed, budget):
    net = generate_grid(3, 3, seed)
    rng = np.random.default_rng(seed)
    sc = rng.exponential(2.0, (7, net.arc_count))
    plan = tuple(range(budget))
    expected = [max_flow(net, c, plan).value for c in sc]
    assert np.allclose(max_flow_values(net, sc, plan), expected, atol=1e-9)


def test_large_network_falls_back_to_augmenting_paths():
    net = generate_grid(4, 3, 1)
    assert len(net.inner_nodes) > 10
    sc = np.random.default_rng(0).uniform(0, 3, (3, net.arc_count))
    vals = max_flow_values(net, sc, (2,))
    assert np.allclose(vals, [nx_value(net, c, (2,)) for c in sc])


def test_dual_certificate_is_feasible():
    net = generate_grid(3, 2, 4)
    cap = np.random.default_rng(4).uniform(0, 4, net.arc_count)
    res = max_flow(net, cap, (1,))
    d = net.sink_indicator
    pot = res.potentials
    for e, (i, j) in enumerate(net.arcs):
        # lam_e + pi_i - pi_j >= d_e with pi_s = 0, pi_t = 1 folded into d
        pi_i = 0.0 if i == net.source else pot[i]
        pi_j = 0.0 if j == net.sink else pot[j]
        assert res.lam[e] + pi_i - pi_j >= d[e] - 1e-12
    assert res.cut_value(cap, (1,)) == pytest.approx(res.value)


def test_flow_matrix_shape_and_rows():
    net, sc = river_crossing()
    F = flow_matrix(net, sc, [(), (2,)])
    assert F.shape == (2, 4)
    assert np.allclose(F[1], max_flow_values(net, sc, (2,)))


def test_generate_grid_is_seeded():
    a, b = generate_grid(4, 2, 7), generate_grid(4, 2, 7)
    assert a == b
    assert a.arc_count == grid_arc_count(4, 2) == 18
    assert a.source == 0 and a.sink == 9
    # first-column nodes are fed by the source, last-column nodes feed the sink
    assert a.arcs[:4] == ((0, 1), (0, 2), (0, 3), (0, 4))
    assert a.arcs[-4:] == ((5, 9), (6, 9), (7, 9), (8, 9))
    assert any(generate_grid(4, 2, s).arcs != a.arcs for s in range(5))


def test_reference_grid():
    net = reference_grid()
    assert net.arc_count == 18 and net.node_count == 10
    assert max_flow(net, np.ones(18)).value == pytest.approx(4.0)


def test_enumerate_plans():
    plans = enumerate_plans(5, 2)
    assert len(plans) == 1 + 5 + 10
    assert plans == sorted(plans) and plans[0] == ()
    assert len(enumerate_plans(3, 9)) == 8
    with pytest.raises(ContractError):
        enumerate_plans(18, 3, cap=100)


def test_zeta_bar_rejects_empty():
    net, _ = river_crossing()
    with pytest.raises(ContractError):
        zeta_bar(net, np.zeros((0, 3)))
