import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drni.graph import ContractError, enumerate_plans, flow_matrix, generate_grid, max_flow, river_crossing
from drni.lp import INF, check_lp_optimality, solve_lp
from drni.master import (
    ColumnPool,
    Duals,
    FlowTable,
    IntervalBox,
    build_master,
    column_generation,
    make_pricer,
    plan_count,
    price,
    price_enumerate,
    reduced_cost,
    solve_master,
)
from drni.risk import BudgetedAmbiguitySet
from instances import random_ambiguity
from oracles import budgeted_vertices, model_value_by_tableau, threshold_value


def example():
    net, sc = river_crossing(3.0, 2.5, 1.5)
    amb = BudgetedAmbiguitySet(np.full(4, 0.25), np.full(4, 0.25), 2.0)
    return net, sc, amb


def small_grid(seed, K=4, gamma=1.0):
    net = generate_grid(3, 2, seed)
    sc = np.random.default_rng(seed).exponential(2.0, (K, net.arc_count))
    return net, sc, BudgetedAmbiguitySet.uniform(K, gamma)


def test_interval_box():
    with pytest.raises(ContractError):
        IntervalBox(2.0, 1.0)
    with pytest.raises(ContractError):
        IntervalBox(-1.0, 1.0)
    a, b = IntervalBox(0.0, 10.0).split(0.2)
    assert (a.lo, a.hi, b.lo, b.hi) == (0.0, 2.0, 2.0, 10.0)
    assert IntervalBox(3.0, 3.0).width == 0.0


def test_flow_table_and_pool():
    net, sc, _ = example()
    flows = FlowTable(net, sc)
    assert np.allclose(flows((1, 0)), [max_flow(net, c, (0, 1)).value for c in sc])
    pool = ColumnPool(flows, [(0, 1), (1, 0), (2,)])
    assert pool.plans == [(), (0, 1), (2,)]
    assert () in pool and (1, 0) in pool and (0,) not in pool
    assert not pool.add((2,))
    snap = pool.snapshot()
    snap.add((0,))
    assert len(pool) == 3 and len(snap) == 4
    assert np.allclose(pool.flow_matrix(), flow_matrix(net, sc, pool.plans))


def test_empty_pool_rejected():
    net, sc, amb = example()
    pool = ColumnPool(FlowTable(net, sc))
    pool.plans.clear()
    with pytest.raises(ContractError):
        build_master(pool, IntervalBox(0, 1), amb, 0.5)


@pytest.mark.parametrize("plans,expected", [((), 7.0), (enumerate_plans(3, 2), 2.5)])
def test_master_matches_tableau_oracle(plans, expected):
    net, sc, amb = example()
    pool = ColumnPool(FlowTable(net, sc), plans)
    box = IntervalBox(0.0, 7.0)
    model, epi = build_master(pool, box, amb, 0.5)
    sol = solve_master(pool, box, amb, 0.5)
    assert sol.objective == pytest.approx(model_value_by_tableau(model), abs=1e-7)
    assert sol.objective <= expected + 1e-7
    assert sol.eta.sum() == pytest.approx(sol.zeta, abs=1e-7)
    assert sol.u.sum() == pytest.approx(1.0)
    assert len(epi) == 4 and sol.phi.shape == (4,)
    kkt = check_lp_optimality(model, solve_lp(model))
    assert max(kkt.values()) < 1e-6


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), z=st.floats(0.0, 1.0))
def test_master_is_exact_on_a_point(seed, z):
    net, sc, _ = small_grid(seed)
    rng = np.random.default_rng(seed)
    amb = random_ambiguity(rng, 4)
    flows = FlowTable(net, sc)
    plans = enumerate_plans(net.arc_count, 1)
    pool = ColumnPool(flows, plans)
    zeta = z * float(flows(()).max())
    sol = solve_master(pool, IntervalBox(zeta, zeta), amb, 0.3)
    V = budgeted_vertices(amb.q_hat, amb.q_bar, amb.gamma)
    assert sol.objective == pytest.approx(threshold_value(pool.flow_matrix(), V, zeta, 0.3), abs=1e-6)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_column_generation_bound_is_valid(seed):
    net, sc, amb = small_grid(seed)
    flows = FlowTable(net, sc)
    zb = float(flows(()).max())
    rng = np.random.default_rng(seed)
    lo, hi = sorted(rng.uniform(0, zb, 2))
    box = IntervalBox(lo, hi)
    pool = ColumnPool(flows)
    cg = column_generation(box, pool, amb, 0.05, 1, pricing="milp")
    assert cg.converged and cg.columns_added == len(pool) - 1
    allplans = ColumnPool(flows, enumerate_plans(net.arc_count, 1)).flow_matrix()
    V = budgeted_vertices(amb.q_hat, amb.q_bar, amb.gamma)
    best = min(threshold_value(allplans, V, z, 0.05) for z in np.linspace(lo, hi, 25))
    assert cg.lower_bound <= best + 1e-7
    # nothing outside the pool prices out any more
    v, _ = price_enumerate(Duals.of(cg.master), box, flows, 1, 0.05, exclude=pool.plans)
    assert v >= -1e-6


def test_column_cap_gives_a_lagrangian_bound():
    net, sc, amb = small_grid(3)
    flows = FlowTable(net, sc)
    box = IntervalBox(0.0, float(flows(()).max()))
    full = column_generation(box, ColumnPool(flows), amb, 0.05, 1, pricing="enumerate")
    capped = column_generation(box, ColumnPool(flows), amb, 0.05, 1, pricing="enumerate",
                               max_columns=0)
    assert capped.cap_reached and not capped.converged
    assert capped.lower_bound <= full.lower_bound + 1e-9


def test_reduced_cost_matches_a_fine_scan():
    rng = np.random.default_rng(5)
    for _ in range(20):
        f = rng.uniform(0, 5, 6)
        duals = Duals(rng.uniform(0, 1, 6), rng.normal(), rng.normal())
        box = IntervalBox(*sorted(rng.uniform(0, 5, 2)))
        grid = np.linspace(box.lo, box.hi, 20001)
        scan = duals.p + min(
            duals.phi @ np.maximum(f - e, 0) / 0.9 + duals.pi * e for e in grid
        )
        assert reduced_cost(f, duals, box, 0.1) == pytest.approx(scan, abs=1e-3)
        assert reduced_cost(f, duals, box, 0.1) <= scan + 1e-12


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), budget=st.integers(1, 2), n_ex=st.integers(0, 6))
def test_pricing_respects_exclusions(seed, budget, n_ex):
    net, sc, amb = small_grid(seed)
    flows = FlowTable(net, sc)
    rng = np.random.default_rng(seed)
    duals = Duals(rng.uniform(0, 1, 4) * (rng.random(4) < 0.8), rng.normal(), rng.normal())
    box = IntervalBox(*sorted(rng.uniform(0, float(flows(()).max()), 2)))
    plans = enumerate_plans(net.arc_count, budget)
    exclude = [plans[i] for i in rng.choice(len(plans), n_ex, replace=False)]
    v_e, p_e = price_enumerate(duals, box, flows, budget, 0.05, exclude=exclude)
    v_m, p_m = price(duals, box, net, sc, budget, 0.05, exclude=exclude)
    assert p_e not in exclude and p_m not in exclude
    assert v_m == pytest.approx(v_e, abs=1e-6 * max(1.0, abs(v_e)))
    assert reduced_cost(flows(p_m), duals, box, 0.05) == pytest.approx(v_e, abs=1e-6 * max(1.0, abs(v_e)))


def test_pricing_with_everything_excluded():
    net, sc, _ = example()
    flows = FlowTable(net, sc)
    duals = Duals(np.full(4, 0.25), 0.0, 0.0)
    everything = enumerate_plans(3, 1)
    box = IntervalBox(0.0, 1.0)
    assert price_enumerate(duals, box, flows, 1, 0.5, exclude=everything) == (INF, None)
    assert price(duals, box, net, sc, 1, 0.5, exclude=everything) == (INF, None)


def test_pricer_selection():
    net, sc, _ = example()
    flows = FlowTable(net, sc)
    assert plan_count(3, 2) == 7 and plan_count(3, 9) == 8
    with pytest.raises(ValueError):
        make_pricer(net, flows, 1, 0.5, "magic")
    duals = Duals(np.full(4, 0.25), 0.0, -0.1)
    box = IntervalBox(0.0, 7.0)
    results = {m: make_pricer(net, flows, 2, 0.5, m)(duals, box, [()]) for m in ("auto", "milp", "enumerate")}
    assert results["auto"] == results["enumerate"]
    assert results["milp"][0] == pytest.approx(results["enumerate"][0], abs=1e-7)
