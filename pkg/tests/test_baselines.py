import math

import pytest

from netplace.baselines import cloud_ec, edge_ec, run_sep_lfu
from netplace.marginals import broadcast_marginals
from netplace.model import (
    Catalogs,
    CostModel,
    Scenario,
    SizeModel,
    Task,
    TaskSet,
    Topology,
    check_loop_free,
    solve_traffic,
    flow_cost,
    validate_strategy,
)
from netplace.routing import sep_route
from netplace.scenarios import expand, preset


def _chain(c, rate=1.0, d=1.0, b=5.0, server=2, requester=0, ld=0.2, lc=0.1):
    topo = Topology([(0, 1), (1, 2)])
    costs = CostModel.build(topo, d, c, b)
    catalogs = Catalogs(1, 1, {0: (server,)})
    tasks = TaskSet([Task(requester, 0, 0, rate)], topo.n)
    sizes = SizeModel(default_data=ld, default_result=lc)
    return Scenario(topo, catalogs, tasks, sizes, costs, name="chain")


def test_sep_places_compute_at_cheap_cpu():
    sc = _chain(c={0: 10.0, 1: 0.01, 2: 10.0})
    strategy = sep_route(sc)
    mk = sc.ci_keys[0]
    assert strategy.ci[mk].phi0[1] == 1.0  # b computes
    assert strategy.ci[mk].phi[sc.topo.slot_of[(0, 1)]] == 1.0
    assert strategy.di[sc.di_keys[0]].phi[sc.topo.slot_of[(1, 2)]] == 1.0


def test_sep_places_compute_at_requester_when_results_outweigh_data():
    # shipping the (large) result costs more per hop than fetching the
    # (small) data object to the requester
    sc = _chain(c={0: 0.2, 1: 0.15, 2: 10.0}, d=100.0, ld=0.1, lc=0.4)
    strategy = sep_route(sc)
    mk = sc.ci_keys[0]
    assert strategy.ci[mk].phi0[0] == 1.0


def test_sep_degenerate_requester_is_server():
    sc = _chain(c={0: 0.1, 1: 1.0, 2: 1.0}, server=0)
    strategy = sep_route(sc)
    mk = sc.ci_keys[0]
    assert strategy.ci[mk].phi0[0] == 1.0  # compute next to the data
    ts = solve_traffic(sc, strategy)
    assert all(f == 0.0 for f in ts.F)  # zero link cost


def test_baselines_valid_and_loop_free():
    sc = expand(preset("grid25", seed=8).replace(num_tasks=12, num_data=8, num_comp=3))
    for result in (cloud_ec(sc, max_slots=200), edge_ec(sc, max_slots=200)):
        rep = validate_strategy(result.strategy, sc.topo, sc.catalogs, tol=1e-9)
        assert rep.ok, rep.summary()
        assert check_loop_free(result.strategy).ok
    sl = run_sep_lfu(sc, slots=50)
    assert validate_strategy(sl.strategy, sc.topo, sc.catalogs, tol=1e-9).ok
    assert check_loop_free(sl.strategy).ok


def test_cloud_ec_routes_to_single_compute_node():
    sc = _chain(c={0: 1.0, 1: 1.0, 2: 0.01}, b=50.0)
    res = cloud_ec(sc, max_slots=50)
    mk = sc.ci_keys[0]
    topo = sc.topo
    # ceil(0.05 * 3) = 1 member: node 2 (fastest CPU)
    strat = res.strategy
    assert strat.ci[mk].phi[topo.slot_of[(0, 1)]] > 0.0
    assert strat.ci[mk].phi[topo.slot_of[(1, 2)]] > 0.0
    assert strat.ci[mk].phi0[2] + strat.ci[mk].y[2] == pytest.approx(1.0)


def test_edge_ec_beats_cloud_on_link_cost_with_free_edge_compute():
    # dirt-cheap CPU at the requester and affordable caches: EdgeEC caches
    # the data object at the edge and stops using links entirely
    sc = _chain(c={0: 0.02, 1: 0.5, 2: 0.01}, b=0.3, rate=2.0)
    edge = edge_ec(sc, max_slots=3000, stepsize=0.05)
    cloud = cloud_ec(sc, max_slots=3000, stepsize=0.05)
    e_link = flow_cost(solve_traffic(sc, edge.strategy), sc.costs)
    c_link = flow_cost(solve_traffic(sc, cloud.strategy), sc.costs)
    assert e_link < c_link


def test_restricted_gp_traces_non_increasing():
    sc = expand(preset("grid25", seed=9).replace(num_tasks=10, num_data=6, num_comp=2))
    for res in (cloud_ec(sc, max_slots=400), edge_ec(sc, max_slots=400)):
        Ts = [r.T for r in res.trace]
        assert all(Ts[i + 1] <= Ts[i] + 1e-9 for i in range(1, len(Ts) - 1))


def test_restricted_gp_limit_satisfies_y_subspace_condition():
    sc = _chain(c={0: 0.05, 1: 0.5, 2: 0.01}, b=0.3, rate=2.0)
    res = edge_ec(sc, max_slots=5000, residual_tol=1e-8)
    assert res.converged
    strategy = res.strategy
    rho = res.rho  # the split frozen by the run (unrecoverable at y = 1)
    ts = solve_traffic(sc, strategy)
    marg = broadcast_marginals(sc, strategy, ts)
    topo = sc.topo
    for k, rows in strategy.di.items():
        for i in range(topo.n):
            if i in sc.catalogs.servers[k] or ts.td[k][i] <= 0:
                continue
            p0_share, shares = rho[("d", k)][i]
            dbar = sum(sh * marg.delta_d[k][topo.slot_base[i] + s]
                       for s, sh in shares)
            g = marg.gamma_d[k][i]
            y = rows.y[i]
            if 1e-6 < y < 1 - 1e-6:
                assert abs(g - dbar) <= 1e-6
            elif y <= 1e-6:
                assert g >= dbar - 1e-6
            else:
                assert g <= dbar + 1e-6


def test_sep_lfu_first_capacity_unit_at_requester_side():
    # single hot item: the requester sees the full traffic and the longest
    # remaining retrieval path, so MinCost grows its cache first
    sc = _chain(c={0: 1.0, 1: 1.0, 2: 1.0}, rate=3.0, b=2.0)
    res = run_sep_lfu(sc, slots=3)
    assert res.capacities[0] >= 1


def test_sep_lfu_zero_rates_min_at_slot_zero():
    sc = _chain(c={0: 1.0, 1: 1.0, 2: 1.0}, rate=1e-9, b=2.0)
    res = run_sep_lfu(sc, slots=40, patience=10)
    assert res.best_slot == 0
    Ts = [r.T for r in res.trace]
    assert Ts[-1] >= Ts[0]  # capacity growth only adds deployment cost


def test_sep_lfu_trajectory_minimum_reported():
    sc = expand(preset("grid25", seed=10).replace(num_tasks=10, num_data=6, num_comp=2))
    res = run_sep_lfu(sc, slots=250)
    Ts = [r.T for r in res.trace]
    assert res.best_T == pytest.approx(min(Ts))
    assert math.isfinite(res.best_T)
